//! Clip-level action-recognition scoring: per-action and overall recall
//! and precision over single-action ground-truth clips.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::NULL_ACTION;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("clip file parse error: {0}")]
    Parse(String),
    #[error("duplicate clip id `{0}`")]
    DuplicateClip(String),
    #[error("clip `{id}`: empty frame range {start}..{end}")]
    EmptyRange { id: String, start: usize, end: usize },
    #[error("overlapping clips `{0}` and `{1}`")]
    Overlap(String, String),
    #[error("prediction references unknown clip `{0}`")]
    UnknownClip(String),
}

/// A ground-truth clip with a single action label (`null` for no action).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthClip {
    pub id: String,
    pub start: usize,
    pub end: usize,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMetrics {
    pub clips: usize,
    pub recalled: usize,
    pub recall: f64,
    pub predicted_events: usize,
    pub matched_events: usize,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_action: BTreeMap<String, ActionMetrics>,
    pub overall: OverallMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub recall: f64,
    pub precision: f64,
    pub clips: usize,
    pub predicted_events: usize,
}

/// Reference clip distribution for weighting overall means: how many
/// clips of each action the daily-life corpus contains.
pub fn reference_clip_counts() -> BTreeMap<String, usize> {
    [
        ("null", 161),
        ("open", 48),
        ("close", 40),
        ("pick", 109),
        ("place", 100),
        ("drink", 31),
        ("eat", 28),
        ("micr_food", 10),
        ("take_food", 12),
        ("clean", 10),
    ]
    .into_iter()
    .map(|(a, n)| (a.to_string(), n))
    .collect()
}

/// Clip-count-weighted mean of per-action values. Actions missing from
/// the weight table contribute nothing; `None` when the weights are empty
/// or all zero.
pub fn weighted_mean(
    values: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, usize>,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0usize;
    for (action, v) in values {
        if let Some(&w) = weights.get(action) {
            num += v * w as f64;
            den += w;
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// Parses the `clip_id,start,end,action` CSV (header optional).
pub fn parse_clips(text: &str) -> Result<Vec<GroundTruthClip>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut clips = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| EvalError::Parse(e.to_string()))?;
        if i == 0 && record.get(0) == Some("clip_id") {
            continue;
        }
        if record.len() != 4 {
            return Err(EvalError::Parse(format!(
                "row {}: expected 4 fields, got {}",
                i + 1,
                record.len()
            )));
        }
        let parse_frame = |field: usize| -> Result<usize, EvalError> {
            record[field]
                .parse()
                .map_err(|_| EvalError::Parse(format!("row {}: bad frame number", i + 1)))
        };
        clips.push(GroundTruthClip {
            id: record[0].to_string(),
            start: parse_frame(1)?,
            end: parse_frame(2)?,
            action: record[3].to_string(),
        });
    }
    validate_clips(&clips)?;
    Ok(clips)
}

fn validate_clips(clips: &[GroundTruthClip]) -> Result<(), EvalError> {
    let mut seen = BTreeMap::new();
    for c in clips {
        if c.end < c.start {
            return Err(EvalError::EmptyRange {
                id: c.id.clone(),
                start: c.start,
                end: c.end,
            });
        }
        if let Some(prev) = seen.insert(c.id.clone(), c) {
            return Err(EvalError::DuplicateClip(prev.id.clone()));
        }
    }
    let mut sorted: Vec<&GroundTruthClip> = clips.iter().collect();
    sorted.sort_by_key(|c| c.start);
    for pair in sorted.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(EvalError::Overlap(pair[0].id.clone(), pair[1].id.clone()));
        }
    }
    Ok(())
}

/// Scores predicted action names per clip against the ground truth. A clip
/// is recalled when its action appears among the clip's predictions; a
/// `null` clip is recalled when it has no predictions. Precision is the
/// fraction of predicted events matching their clip's label.
pub fn score_clips(
    predictions: &BTreeMap<String, Vec<String>>,
    gt: &[GroundTruthClip],
) -> Result<Metrics, EvalError> {
    validate_clips(gt)?;
    let known: BTreeMap<&str, &GroundTruthClip> =
        gt.iter().map(|c| (c.id.as_str(), c)).collect();
    for id in predictions.keys() {
        if !known.contains_key(id.as_str()) {
            return Err(EvalError::UnknownClip(id.clone()));
        }
    }

    let mut per_action: BTreeMap<String, ActionMetrics> = BTreeMap::new();
    let mut recalled_total = 0;
    let mut matched_total = 0;
    let mut predicted_total = 0;
    let empty = Vec::new();
    for clip in gt {
        let preds = predictions.get(&clip.id).unwrap_or(&empty);
        let recalled = if clip.action == NULL_ACTION {
            preds.is_empty()
        } else {
            preds.contains(&clip.action)
        };
        let entry = per_action.entry(clip.action.clone()).or_insert(ActionMetrics {
            clips: 0,
            recalled: 0,
            recall: 0.0,
            predicted_events: 0,
            matched_events: 0,
            precision: None,
        });
        entry.clips += 1;
        if recalled {
            entry.recalled += 1;
            recalled_total += 1;
        }
        for p in preds {
            predicted_total += 1;
            if *p == clip.action {
                matched_total += 1;
            }
        }
    }
    // Event buckets keyed by the predicted action.
    for clip in gt {
        let preds = predictions.get(&clip.id).unwrap_or(&empty);
        for p in preds {
            let entry = per_action.entry(p.clone()).or_insert(ActionMetrics {
                clips: 0,
                recalled: 0,
                recall: 0.0,
                predicted_events: 0,
                matched_events: 0,
                precision: None,
            });
            entry.predicted_events += 1;
            if *p == clip.action {
                entry.matched_events += 1;
            }
        }
    }
    for m in per_action.values_mut() {
        m.recall = if m.clips > 0 { m.recalled as f64 / m.clips as f64 } else { 0.0 };
        m.precision = (m.predicted_events > 0)
            .then(|| m.matched_events as f64 / m.predicted_events as f64);
    }

    let overall = OverallMetrics {
        recall: if gt.is_empty() { 0.0 } else { recalled_total as f64 / gt.len() as f64 },
        precision: if predicted_total == 0 {
            1.0
        } else {
            matched_total as f64 / predicted_total as f64
        },
        clips: gt.len(),
        predicted_events: predicted_total,
    };
    Ok(Metrics { per_action, overall })
}
