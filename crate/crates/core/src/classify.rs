//! One-hot transition encodings and linear classifier heads: the AAR and
//! RAR action models trained from the knowledge base, and category-gated
//! state detectors over abstract feature vectors.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::KnowledgeBase;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("subject and object categories must differ, got `{0}` twice")]
    SubjectEqualsObject(String),
    #[error("dimension mismatch: head expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("degenerate training set: fewer than 2 classes present")]
    SingleClass,
    #[error("training did not reach perfect accuracy within {epochs} epochs (best {accuracy:.3})")]
    NotConverged { epochs: usize, accuracy: f64 },
    #[error("non-finite feature value")]
    NonFiniteFeature,
}

type Result<T> = std::result::Result<T, ClassifyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionModelKind {
    /// Attribute-transition based action reasoning.
    Aar,
    /// Relationship-transition based action reasoning.
    Rar,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, epochs: 50000, seed: 0 }
    }
}

/// Affine multi-class head: scores = w x + b, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearHead {
    pub input_dim: usize,
    pub classes: Vec<String>,
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(input_dim: usize, classes: Vec<String>) -> Self {
        let k = classes.len();
        Self { input_dim, classes, w: vec![vec![0.0; input_dim]; k], b: vec![0.0; k] }
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(self
            .w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect())
    }
}

/// Argmax with lowest-index tie-break.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Predicted action index plus the raw score vector.
pub fn predict_action(head: &LinearHead, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    let scores = head.scores(x)?;
    Ok((argmax(&scores), scores))
}

fn one_hot(dim: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[index] = 1.0;
    v
}

/// AAR input: [w2v(object), w2v(pre), w2v(eff)], dimension M + 2S.
pub fn encode_attribute_transition(
    kb: &KnowledgeBase,
    object: &str,
    pre: &str,
    eff: &str,
) -> Result<Vec<f64>> {
    let voc = &kb.vocabulary;
    let (m, s) = (voc.objects.len(), voc.attributes.len());
    let oi = voc.object_index(object).ok_or_else(|| ClassifyError::UnknownName(object.into()))?;
    let pi = voc.attribute_index(pre).ok_or_else(|| ClassifyError::UnknownName(pre.into()))?;
    let ei = voc.attribute_index(eff).ok_or_else(|| ClassifyError::UnknownName(eff.into()))?;
    let mut x = Vec::with_capacity(m + 2 * s);
    x.extend(one_hot(m, oi));
    x.extend(one_hot(s, pi));
    x.extend(one_hot(s, ei));
    Ok(x)
}

/// RAR input: [w2v(subject), w2v(object), w2v(pre), w2v(eff)], dimension
/// 2M + 2N. Rejects subject category equal to object category.
pub fn encode_relationship_transition(
    kb: &KnowledgeBase,
    subject: &str,
    object: &str,
    pre: &str,
    eff: &str,
) -> Result<Vec<f64>> {
    if subject == object {
        return Err(ClassifyError::SubjectEqualsObject(subject.into()));
    }
    let voc = &kb.vocabulary;
    let (m, n) = (voc.objects.len(), voc.relationships.len());
    let si = voc.object_index(subject).ok_or_else(|| ClassifyError::UnknownName(subject.into()))?;
    let oi = voc.object_index(object).ok_or_else(|| ClassifyError::UnknownName(object.into()))?;
    let pi =
        voc.relationship_index(pre).ok_or_else(|| ClassifyError::UnknownName(pre.into()))?;
    let ei =
        voc.relationship_index(eff).ok_or_else(|| ClassifyError::UnknownName(eff.into()))?;
    let mut x = Vec::with_capacity(2 * m + 2 * n);
    x.extend(one_hot(m, si));
    x.extend(one_hot(m, oi));
    x.extend(one_hot(n, pi));
    x.extend(one_hot(n, ei));
    Ok(x)
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy over a labeled batch.
pub fn cross_entropy(head: &LinearHead, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let p = softmax(&head.scores(x)?);
        total -= p[y].max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / xs.len() as f64)
}

/// Analytic cross-entropy gradient, same shapes as the head parameters.
pub fn linear_head_gradient(
    head: &LinearHead,
    xs: &[Vec<f64>],
    ys: &[usize],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let k = head.classes.len();
    let mut gw = vec![vec![0.0; head.input_dim]; k];
    let mut gb = vec![0.0; k];
    let batch = xs.len() as f64;
    for (x, &y) in xs.iter().zip(ys) {
        let p = softmax(&head.scores(x)?);
        for c in 0..k {
            let delta = (p[c] - if c == y { 1.0 } else { 0.0 }) / batch;
            gb[c] += delta;
            for (gwj, xj) in gw[c].iter_mut().zip(x) {
                *gwj += delta * xj;
            }
        }
    }
    Ok((gw, gb))
}

fn train_accuracy(head: &LinearHead, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    let mut correct = 0;
    for (x, &y) in xs.iter().zip(ys) {
        if predict_action(head, x)?.0 == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / xs.len() as f64)
}

/// Result of a head training run.
#[derive(Debug, Clone)]
pub struct TrainedHead {
    pub head: LinearHead,
    pub training_accuracy: f64,
    pub epochs_run: usize,
}

/// Trains an AAR or RAR head on the knowledge base's enumerated
/// transitions by full-batch gradient descent on softmax cross-entropy,
/// stopping once the training set is classified perfectly.
pub fn train_action_head(
    kb: &KnowledgeBase,
    which: ActionModelKind,
    cfg: TrainConfig,
) -> Result<TrainedHead> {
    let classes = kb.vocabulary.actions.clone();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    match which {
        ActionModelKind::Aar => {
            for t in kb.enumerate_attribute_transitions() {
                xs.push(encode_attribute_transition(kb, &t.object, &t.pre, &t.eff)?);
                ys.push(kb.vocabulary.action_index(&t.action).expect("rule action in vocabulary"));
            }
        }
        ActionModelKind::Rar => {
            for t in kb.enumerate_relationship_transitions() {
                xs.push(encode_relationship_transition(kb, &t.subject, &t.object, &t.pre, &t.eff)?);
                ys.push(kb.vocabulary.action_index(&t.action).expect("rule action in vocabulary"));
            }
        }
    }
    if xs.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    let input_dim = xs[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = LinearHead::zeros(input_dim, classes);
    for row in &mut head.w {
        for w in row {
            *w = rng.gen_range(-0.01..0.01);
        }
    }
    // The encodings are concatenated one-hots, so each sample touches only
    // a handful of input dimensions; iterating just those keeps full-batch
    // epochs cheap without changing any numeric result.
    let active: Vec<Vec<usize>> = xs
        .iter()
        .map(|x| (0..input_dim).filter(|&j| x[j] != 0.0).collect())
        .collect();
    let k = head.classes.len();
    let mut best: f64 = 0.0;
    for epoch in 1..=cfg.epochs {
        let mut correct = 0;
        let mut gw = vec![vec![0.0; input_dim]; k];
        let mut gb = vec![0.0; k];
        let batch = xs.len() as f64;
        for ((x, idx), &y) in xs.iter().zip(&active).zip(&ys) {
            let mut scores = head.b.clone();
            for (s, row) in scores.iter_mut().zip(&head.w) {
                for &j in idx {
                    *s += row[j] * x[j];
                }
            }
            if argmax(&scores) == y {
                correct += 1;
            }
            let p = softmax(&scores);
            for c in 0..k {
                let delta = (p[c] - if c == y { 1.0 } else { 0.0 }) / batch;
                gb[c] += delta;
                for &j in idx {
                    gw[c][j] += delta * x[j];
                }
            }
        }
        let acc = correct as f64 / xs.len() as f64;
        best = best.max(acc);
        if acc == 1.0 {
            return Ok(TrainedHead { head, training_accuracy: acc, epochs_run: epoch - 1 });
        }
        for (row, grow) in head.w.iter_mut().zip(&gw) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= cfg.learning_rate * g;
            }
        }
        for (b, g) in head.b.iter_mut().zip(&gb) {
            *b -= cfg.learning_rate * g;
        }
    }
    let acc = train_accuracy(&head, &xs, &ys)?;
    if acc == 1.0 {
        return Ok(TrainedHead { head, training_accuracy: acc, epochs_run: cfg.epochs });
    }
    Err(ClassifyError::NotConverged { epochs: cfg.epochs, accuracy: best.max(acc) })
}

/// Category-gated state detector: scores = z (x ⊙ gate c) + d, where the
/// gate is a learned linear map from category one-hots to per-dimension
/// multiplicative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedStateHead {
    pub feature_dim: usize,
    pub category_dim: usize,
    pub states: Vec<String>,
    /// states x feature_dim
    pub z: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    /// feature_dim x category_dim
    pub omega: Vec<Vec<f64>>,
}

impl GatedStateHead {
    pub fn identity_gate(feature_dim: usize, category_dim: usize, states: Vec<String>) -> Self {
        let s = states.len();
        Self {
            feature_dim,
            category_dim,
            states,
            z: vec![vec![0.0; feature_dim]; s],
            d: vec![0.0; s],
            // Gate of all ones on any one-hot category input.
            omega: vec![vec![1.0; category_dim]; feature_dim],
        }
    }

    pub fn gate(&self, categories: &[f64]) -> Result<Vec<f64>> {
        if categories.len() != self.category_dim {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.category_dim,
                got: categories.len(),
            });
        }
        Ok(self
            .omega
            .iter()
            .map(|row| row.iter().zip(categories).map(|(w, c)| w * c).sum())
            .collect())
    }

    /// Score vector over state values for one (feature, categories) input.
    pub fn score(&self, feature: &[f64], categories: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.feature_dim {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.feature_dim,
                got: feature.len(),
            });
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::NonFiniteFeature);
        }
        let gate = self.gate(categories)?;
        let gated: Vec<f64> = feature.iter().zip(&gate).map(|(x, g)| x * g).collect();
        Ok(self
            .z
            .iter()
            .zip(&self.d)
            .map(|(row, d)| row.iter().zip(&gated).map(|(z, u)| z * u).sum::<f64>() + d)
            .collect())
    }
}

/// One labeled state-detection sample.
#[derive(Debug, Clone)]
pub struct StateSample {
    pub feature: Vec<f64>,
    pub categories: Vec<f64>,
    pub state: usize,
}

pub struct GateGradients {
    pub z: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
}

/// Mean cross-entropy of a gated head over a batch.
pub fn gated_cross_entropy(head: &GatedStateHead, samples: &[StateSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let p = softmax(&head.score(&s.feature, &s.categories)?);
        total -= p[s.state].max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / samples.len() as f64)
}

/// Analytic cross-entropy gradient for every gated-head parameter.
pub fn gated_head_gradient(
    head: &GatedStateHead,
    samples: &[StateSample],
) -> Result<GateGradients> {
    let s_count = head.states.len();
    let mut gz = vec![vec![0.0; head.feature_dim]; s_count];
    let mut gd = vec![0.0; s_count];
    let mut gomega = vec![vec![0.0; head.category_dim]; head.feature_dim];
    let batch = samples.len() as f64;
    for sample in samples {
        let gate = head.gate(&sample.categories)?;
        let gated: Vec<f64> =
            sample.feature.iter().zip(&gate).map(|(x, g)| x * g).collect();
        let p = softmax(&head.score(&sample.feature, &sample.categories)?);
        // d loss / d gated input, accumulated over states.
        let mut dgated = vec![0.0; head.feature_dim];
        for st in 0..s_count {
            let delta = (p[st] - if st == sample.state { 1.0 } else { 0.0 }) / batch;
            gd[st] += delta;
            for f in 0..head.feature_dim {
                gz[st][f] += delta * gated[f];
                dgated[f] += delta * head.z[st][f];
            }
        }
        for f in 0..head.feature_dim {
            let dgate = dgated[f] * sample.feature[f];
            for (gom, c) in gomega[f].iter_mut().zip(&sample.categories) {
                *gom += dgate * c;
            }
        }
    }
    Ok(GateGradients { z: gz, d: gd, omega: gomega })
}

#[derive(Debug, Clone)]
pub struct TrainedStateHead {
    pub head: GatedStateHead,
    pub training_accuracy: f64,
    pub holdout_accuracy: f64,
}

pub fn gated_accuracy(head: &GatedStateHead, samples: &[StateSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for s in samples {
        if argmax(&head.score(&s.feature, &s.categories)?) == s.state {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains a gated state head with full-batch gradient descent. When
/// `train_gate` is false the gate stays frozen at all-ones, giving the
/// plain ungated classifier of the same capacity.
pub fn train_state_head(
    train: &[StateSample],
    holdout: &[StateSample],
    num_states: usize,
    cfg: TrainConfig,
    train_gate: bool,
) -> Result<TrainedStateHead> {
    if train.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    let mut seen = vec![false; num_states];
    for s in train {
        seen[s.state] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(ClassifyError::SingleClass);
    }
    let feature_dim = train[0].feature.len();
    let category_dim = train[0].categories.len();
    let states = (0..num_states).map(|i| format!("state_{i}")).collect();
    let mut head = GatedStateHead::identity_gate(feature_dim, category_dim, states);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for row in &mut head.z {
        for z in row {
            *z = rng.gen_range(-0.1..0.1);
        }
    }
    for _ in 0..cfg.epochs {
        let g = gated_head_gradient(&head, train)?;
        for (row, grow) in head.z.iter_mut().zip(&g.z) {
            for (z, gz) in row.iter_mut().zip(grow) {
                *z -= cfg.learning_rate * gz;
            }
        }
        for (d, gd) in head.d.iter_mut().zip(&g.d) {
            *d -= cfg.learning_rate * gd;
        }
        if train_gate {
            for (row, grow) in head.omega.iter_mut().zip(&g.omega) {
                for (w, gw) in row.iter_mut().zip(grow) {
                    *w -= cfg.learning_rate * gw;
                }
            }
        }
    }
    let training_accuracy = gated_accuracy(&head, train)?;
    let holdout_accuracy = gated_accuracy(&head, holdout)?;
    Ok(TrainedStateHead { head, training_accuracy, holdout_accuracy })
}

/// Checks a trained head against knowledge-base lookup on every
/// enumerable transition; returns the number of disagreements.
pub fn oracle_disagreements(
    kb: &KnowledgeBase,
    which: ActionModelKind,
    head: &LinearHead,
) -> Result<usize> {
    let mut bad = 0;
    match which {
        ActionModelKind::Aar => {
            for t in kb.enumerate_attribute_transitions() {
                let x = encode_attribute_transition(kb, &t.object, &t.pre, &t.eff)?;
                let (idx, _) = predict_action(head, &x)?;
                if head.classes[idx] != t.action {
                    bad += 1;
                }
            }
        }
        ActionModelKind::Rar => {
            for t in kb.enumerate_relationship_transitions() {
                let x =
                    encode_relationship_transition(kb, &t.subject, &t.object, &t.pre, &t.eff)?;
                let (idx, _) = predict_action(head, &x)?;
                if head.classes[idx] != t.action {
                    bad += 1;
                }
            }
        }
    }
    Ok(bad)
}
