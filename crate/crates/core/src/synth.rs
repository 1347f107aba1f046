//! Seeded synthetic scenario generation: ground-truth state timelines
//! rendered into an observation stream, with optional per-frame flip noise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::graph::{build_video_graph, parse_observations, TransitionEvent};
use crate::kb::KnowledgeBase;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("script error: {0}")]
    Invalid(String),
    #[error("graph error: {0}")]
    Graph(#[from] crate::graph::GraphError),
}

type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub frame_count: usize,
    pub objects: Vec<ScriptObject>,
    #[serde(default)]
    pub attribute_timelines: Vec<AttributeTimeline>,
    #[serde(default)]
    pub relationship_timelines: Vec<RelationshipTimeline>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptObject {
    pub id: String,
    pub category: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeTimeline {
    pub id: String,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationshipTimeline {
    pub subject: String,
    pub object: String,
    pub segments: Vec<Segment>,
}

/// `value` holds from `start` until the next segment's start (or the end).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: usize,
    pub value: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub flip_probability: f64,
    #[serde(default)]
    pub seed: u64,
    /// Restrict flips to frames deep inside a stable run, so a matching
    /// refinement window can always recover the clean series.
    #[serde(default)]
    pub isolated: bool,
    /// Minimum distance of a flip from the start of its clean run when
    /// `isolated` is set.
    #[serde(default = "default_guard")]
    pub guard: usize,
}

fn default_guard() -> usize {
    5
}

pub fn parse_script(text: &str) -> Result<ScenarioScript> {
    let script: ScenarioScript =
        serde_json::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?;
    if script.frame_count == 0 {
        return Err(SynthError::Invalid("frame_count must be positive".into()));
    }
    if let Some(noise) = &script.noise {
        if !(0.0..0.5).contains(&noise.flip_probability) {
            return Err(SynthError::Invalid(format!(
                "flip probability {} outside [0, 0.5)",
                noise.flip_probability
            )));
        }
    }
    for tl in &script.attribute_timelines {
        check_segments(&tl.segments, script.frame_count, &format!("attribute timeline `{}`", tl.id))?;
    }
    for tl in &script.relationship_timelines {
        check_segments(
            &tl.segments,
            script.frame_count,
            &format!("relationship timeline (`{}`, `{}`)", tl.subject, tl.object),
        )?;
    }
    Ok(script)
}

fn check_segments(segments: &[Segment], frame_count: usize, ctx: &str) -> Result<()> {
    if segments.is_empty() {
        return Err(SynthError::Invalid(format!("{ctx}: no segments")));
    }
    let mut prev = 0;
    for s in segments {
        if s.start <= prev {
            return Err(SynthError::Invalid(format!(
                "{ctx}: segment starts must be strictly increasing and positive"
            )));
        }
        if s.start > frame_count {
            return Err(SynthError::Invalid(format!(
                "{ctx}: segment start {} beyond frame count {frame_count}",
                s.start
            )));
        }
        prev = s.start;
    }
    Ok(())
}

/// Dense clean value series for a timeline; `None` before the first segment.
fn densify(segments: &[Segment], frame_count: usize) -> Vec<Option<&str>> {
    let mut values = vec![None; frame_count];
    let mut idx = 0;
    for t in 1..=frame_count {
        while idx < segments.len() && segments[idx].start == t {
            idx += 1;
        }
        if idx > 0 {
            values[t - 1] = Some(segments[idx - 1].value.as_str());
        }
    }
    values
}

fn flip_value<'a>(kb: &'a KnowledgeBase, value: &str) -> Option<&'a str> {
    if let Some(d) = kb.attribute_domain_of(value) {
        let pair = &kb.attribute_domains[d].pair;
        return Some(if pair[0] == value { &pair[1] } else { &pair[0] });
    }
    if let Some(d) = kb.relationship_domain_of(value) {
        let pair = &kb.relationship_domains[d].pair;
        return Some(if pair[0] == value { &pair[1] } else { &pair[0] });
    }
    None
}

/// Applies seeded flip noise to one dense series.
fn apply_noise<'a>(
    kb: &'a KnowledgeBase,
    clean: &[Option<&'a str>],
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<Option<&'a str>> {
    let mut out: Vec<Option<&'a str>> = clean.to_vec();
    let n = clean.len();
    for t in 1..=n {
        let Some(value) = clean[t - 1] else { continue };
        // Draw for every defined frame so the stream layout stays fixed
        // regardless of eligibility decisions.
        let hit = rng.gen::<f64>() < noise.flip_probability;
        if !hit {
            continue;
        }
        if noise.isolated {
            if t == 1 || t >= n {
                continue;
            }
            let prev = clean[t - 2];
            let next = clean[t];
            if prev != Some(value) || next != Some(value) {
                continue;
            }
            // Distance from the start of the current clean run.
            let mut run_start = t;
            while run_start > 1 && clean[run_start - 2] == Some(value) {
                run_start -= 1;
            }
            if t - run_start < noise.guard {
                continue;
            }
        }
        if let Some(flipped) = flip_value(kb, value) {
            out[t - 1] = Some(flipped);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// JSON Lines observation stream, one record per frame.
    pub observations_jsonl: String,
    /// Transitions of the noise-free timelines.
    pub clean_events: Vec<TransitionEvent>,
}

/// Renders a script into an observation stream. Noise (when configured)
/// applies to the emitted states only; the returned clean events always
/// reflect the script's ground truth.
pub fn synthesize_observations(kb: &KnowledgeBase, script: &ScenarioScript) -> Result<SynthOutput> {
    let t_max = script.frame_count;
    let noise = script.noise.clone().unwrap_or(NoiseSpec {
        flip_probability: 0.0,
        seed: 0,
        isolated: false,
        guard: default_guard(),
    });
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

    let attr_clean: Vec<Vec<Option<&str>>> = script
        .attribute_timelines
        .iter()
        .map(|tl| densify(&tl.segments, t_max))
        .collect();
    let rel_clean: Vec<Vec<Option<&str>>> = script
        .relationship_timelines
        .iter()
        .map(|tl| densify(&tl.segments, t_max))
        .collect();
    let attr_noisy: Vec<Vec<Option<&str>>> =
        attr_clean.iter().map(|c| apply_noise(kb, c, &noise, &mut rng)).collect();
    let rel_noisy: Vec<Vec<Option<&str>>> =
        rel_clean.iter().map(|c| apply_noise(kb, c, &noise, &mut rng)).collect();

    let render = |series_per_tl: &[Vec<Option<&str>>]| -> Vec<Vec<Option<String>>> {
        series_per_tl
            .iter()
            .map(|s| s.iter().map(|v| v.map(str::to_string)).collect())
            .collect()
    };
    let attr_out = render(&attr_noisy);
    let rel_out = render(&rel_noisy);

    let mut lines = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let objects: Vec<serde_json::Value> = if t == 1 {
            script
                .objects
                .iter()
                .map(|o| json!({"id": o.id, "category": o.category, "bbox": o.bbox}))
                .collect()
        } else {
            Vec::new()
        };
        let attributes: Vec<serde_json::Value> = script
            .attribute_timelines
            .iter()
            .zip(&attr_out)
            .filter_map(|(tl, series)| {
                series[t - 1].as_ref().map(|v| json!({"id": tl.id, "value": v}))
            })
            .collect();
        let relationships: Vec<serde_json::Value> = script
            .relationship_timelines
            .iter()
            .zip(&rel_out)
            .filter_map(|(tl, series)| {
                series[t - 1]
                    .as_ref()
                    .map(|v| json!({"subject": tl.subject, "object": tl.object, "value": v}))
            })
            .collect();
        let record = json!({
            "frame": t,
            "objects": objects,
            "attributes": attributes,
            "relationships": relationships,
        });
        lines.push(serde_json::to_string(&record).expect("serializable record"));
    }
    let observations_jsonl = lines.join("\n") + "\n";

    // Clean events via the graph path on a noise-free rendering. This also
    // validates categories and domain applicability.
    let clean_script = ScenarioScript { noise: None, ..script.clone() };
    let clean_stream = if script.noise.is_some() {
        synthesize_observations(kb, &clean_script)?.observations_jsonl
    } else {
        observations_jsonl.clone()
    };
    let records = parse_observations(&clean_stream)?;
    let vg = build_video_graph(kb, &records)?;
    let clean_events = vg.detect_transitions(kb);

    Ok(SynthOutput { observations_jsonl, clean_events })
}
