//! End-to-end pipeline: refined video graph -> transition events ->
//! explained action events, via rule lookup or the learned heads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{
    encode_attribute_transition, encode_relationship_transition, predict_action, LinearHead,
};
use crate::graph::{BBox, StateKind, VideoGraph};
use crate::kb::{KnowledgeBase, NULL_ACTION};
use crate::refine::{refine_video_graph, RefinementConfig};

#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("learned backend requires both AAR and RAR heads")]
    MissingHeads,
    #[error("classifier error: {0}")]
    Classifier(#[from] crate::classify::ClassifyError),
    #[error("cannot parse explanation `{0}`")]
    BadSentence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Rule,
    Learned,
}

/// A participant of an action event: who, with its category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub instance_id: String,
    pub category: String,
}

/// A detected, explained action: who, when, where and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub action: String,
    pub kind: StateKind,
    pub participants: Vec<Participant>,
    pub time: usize,
    pub locations: Vec<Option<BBox>>,
    pub pre: String,
    pub eff: String,
    pub backend: Backend,
}

/// A transition whose states fall outside every knowledge-base domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnexplainableTransition {
    pub participants: Vec<String>,
    pub pre: String,
    pub eff: String,
    pub time: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ReasonerConfig {
    pub backend: Backend,
    pub refinement: RefinementConfig,
    /// Include null-classified transitions in the output event list.
    pub emit_null: bool,
    pub aar_head: Option<LinearHead>,
    pub rar_head: Option<LinearHead>,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Rule,
            refinement: RefinementConfig::default(),
            emit_null: false,
            aar_head: None,
            rar_head: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReasonOutput {
    pub events: Vec<ActionEvent>,
    /// Transitions classified as null (dropped from `events` unless
    /// `emit_null` is set, in which case they appear in both).
    pub null_transitions: usize,
    pub unexplainable: Vec<UnexplainableTransition>,
    pub transitions_total: usize,
}

/// Runs refinement, transition detection and per-transition action
/// classification over a video graph.
pub fn reason(
    vg: &VideoGraph,
    kb: &KnowledgeBase,
    cfg: &ReasonerConfig,
) -> Result<ReasonOutput, ReasonError> {
    if cfg.backend == Backend::Learned && (cfg.aar_head.is_none() || cfg.rar_head.is_none()) {
        return Err(ReasonError::MissingHeads);
    }
    let refined = refine_video_graph(vg, cfg.refinement);
    let transitions = refined.detect_transitions(kb);
    let mut out = ReasonOutput { transitions_total: transitions.len(), ..Default::default() };

    for tr in &transitions {
        let categories: Vec<&str> = tr
            .participants
            .iter()
            .map(|id| refined.objects[id].category.as_str())
            .collect();
        let action: Result<String, String> = match cfg.backend {
            Backend::Rule => {
                let looked = match tr.kind {
                    StateKind::Attribute => {
                        kb.lookup_attribute_action(categories[0], &tr.pre, &tr.eff)
                    }
                    StateKind::Relationship => kb.lookup_relationship_action(
                        categories[0],
                        categories[1],
                        &tr.pre,
                        &tr.eff,
                    ),
                };
                looked.map(str::to_string).map_err(|e| e.to_string())
            }
            Backend::Learned => {
                let encoded = match tr.kind {
                    StateKind::Attribute => {
                        encode_attribute_transition(kb, categories[0], &tr.pre, &tr.eff)
                    }
                    StateKind::Relationship => encode_relationship_transition(
                        kb,
                        categories[0],
                        categories[1],
                        &tr.pre,
                        &tr.eff,
                    ),
                };
                match encoded {
                    Ok(x) => {
                        let head = match tr.kind {
                            StateKind::Attribute => cfg.aar_head.as_ref().unwrap(),
                            StateKind::Relationship => cfg.rar_head.as_ref().unwrap(),
                        };
                        match predict_action(head, &x) {
                            Ok((idx, _)) => Ok(head.classes[idx].clone()),
                            Err(e) => Err(e.to_string()),
                        }
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
        };
        match action {
            Err(message) => out.unexplainable.push(UnexplainableTransition {
                participants: tr.participants.clone(),
                pre: tr.pre.clone(),
                eff: tr.eff.clone(),
                time: tr.time,
                message,
            }),
            Ok(action) => {
                let is_null = action == NULL_ACTION;
                if is_null {
                    out.null_transitions += 1;
                }
                if !is_null || cfg.emit_null {
                    out.events.push(ActionEvent {
                        action,
                        kind: tr.kind,
                        participants: tr
                            .participants
                            .iter()
                            .zip(&categories)
                            .map(|(id, cat)| Participant {
                                instance_id: id.clone(),
                                category: (*cat).to_string(),
                            })
                            .collect(),
                        time: tr.time,
                        locations: tr.locations.clone(),
                        pre: tr.pre.clone(),
                        eff: tr.eff.clone(),
                        backend: cfg.backend,
                    });
                }
            }
        }
    }
    // detect_transitions already sorts by (time, participants); the filter
    // above preserves that order.
    Ok(out)
}

/// Renders an event in the `action (participants, pre to eff, frame t)` form.
pub fn explain(event: &ActionEvent) -> String {
    let names: Vec<&str> =
        event.participants.iter().map(|p| p.instance_id.as_str()).collect();
    format!(
        "{} ({}, {} to {}, frame {})",
        event.action,
        names.join(", "),
        event.pre,
        event.eff,
        event.time
    )
}

/// Parses a sentence produced by [`explain`] back into its fields:
/// (action, participants, pre, eff, time).
pub fn parse_explanation(
    sentence: &str,
) -> Result<(String, Vec<String>, String, String, usize), ReasonError> {
    let bad = || ReasonError::BadSentence(sentence.to_string());
    let (action, rest) = sentence.split_once(" (").ok_or_else(bad)?;
    let body = rest.strip_suffix(')').ok_or_else(bad)?;
    let parts: Vec<&str> = body.split(", ").collect();
    if parts.len() < 3 {
        return Err(bad());
    }
    let time = parts
        .last()
        .unwrap()
        .strip_prefix("frame ")
        .and_then(|t| t.parse().ok())
        .ok_or_else(bad)?;
    let (pre, eff) = parts[parts.len() - 2].split_once(" to ").ok_or_else(bad)?;
    let participants = parts[..parts.len() - 2].iter().map(|s| s.to_string()).collect();
    Ok((action.to_string(), participants, pre.to_string(), eff.to_string(), time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::{build_video_graph, parse_observations};

    fn reason_script(script_json: &str, cfg: &ReasonerConfig) -> ReasonOutput {
        let kb = fixtures::daily_life_kb();
        let script = crate::synth::parse_script(script_json).unwrap();
        let stream = crate::synth::synthesize_observations(&kb, &script).unwrap();
        let records = parse_observations(&stream.observations_jsonl).unwrap();
        let vg = build_video_graph(&kb, &records).unwrap();
        reason(&vg, &kb, cfg).unwrap()
    }

    fn summary(out: &ReasonOutput) -> Vec<String> {
        out.events.iter().map(explain).collect()
    }

    #[test]
    fn microwave_cloth_events() {
        let out = reason_script(fixtures::SCRIPT_MICROWAVE_CLOTH, &ReasonerConfig::default());
        assert_eq!(
            summary(&out),
            vec![
                "open (microwave_1, closed to open, frame 216)",
                "pick (hand_2, cloth_1, not_holding to holding, frame 242)",
            ]
        );
    }

    #[test]
    fn having_meal_events() {
        let out = reason_script(fixtures::SCRIPT_HAVING_MEAL, &ReasonerConfig::default());
        assert_eq!(
            summary(&out),
            vec![
                "pick (hand_1, cup_2, not_holding to holding, frame 35)",
                "drink (head_1, cup_2, apart to contacting, frame 70)",
                "place (hand_1, cup_2, holding to not_holding, frame 180)",
                "pick (hand_2, apple_1, not_holding to holding, frame 180)",
                "eat (head_1, apple_1, apart to contacting, frame 188)",
            ]
        );
    }

    #[test]
    fn microwave_bowl_events() {
        let out = reason_script(fixtures::SCRIPT_MICROWAVE_BOWL, &ReasonerConfig::default());
        assert_eq!(
            summary(&out),
            vec![
                "open (microwave_1, closed to open, frame 125)",
                "pick (hand_1, bowl_1, not_holding to holding, frame 216)",
                "pick (hand_2, bowl_1, not_holding to holding, frame 216)",
                "place (hand_2, bowl_1, holding to not_holding, frame 273)",
                "micr_food (microwave_1, bowl_1, separate to containing, frame 273)",
                "close (microwave_1, open to closed, frame 367)",
            ]
        );
    }

    #[test]
    fn constant_video_is_empty() {
        let script = r#"{
            "frame_count": 50,
            "objects": [{"id": "microwave_1", "category": "microwave", "bbox": [0, 0, 10, 10]}],
            "attribute_timelines": [
                {"id": "microwave_1", "segments": [{"start": 1, "value": "closed"}]}
            ],
            "relationship_timelines": []
        }"#;
        let out = reason_script(script, &ReasonerConfig::default());
        assert!(out.events.is_empty());
        assert_eq!(out.transitions_total, 0);
    }

    #[test]
    fn completeness_accounting() {
        let out = reason_script(fixtures::SCRIPT_HAVING_MEAL, &ReasonerConfig::default());
        assert_eq!(
            out.events.len() + out.null_transitions + out.unexplainable.len(),
            out.transitions_total
        );
    }

    #[test]
    fn learned_backend_agrees_with_rules() {
        use crate::classify::{train_action_head, ActionModelKind, TrainConfig};
        let kb = fixtures::daily_life_kb();
        let aar = train_action_head(&kb, ActionModelKind::Aar, TrainConfig::default()).unwrap();
        let rar = train_action_head(&kb, ActionModelKind::Rar, TrainConfig::default()).unwrap();
        let learned = ReasonerConfig {
            backend: Backend::Learned,
            aar_head: Some(aar.head),
            rar_head: Some(rar.head),
            ..Default::default()
        };
        for script in [
            fixtures::SCRIPT_MICROWAVE_CLOTH,
            fixtures::SCRIPT_HAVING_MEAL,
            fixtures::SCRIPT_MICROWAVE_BOWL,
        ] {
            let rule_out = reason_script(script, &ReasonerConfig::default());
            let learned_out = reason_script(script, &learned);
            let strip = |o: &ReasonOutput| {
                o.events
                    .iter()
                    .map(|e| (e.action.clone(), e.participants.clone(), e.time))
                    .collect::<Vec<_>>()
            };
            assert_eq!(strip(&rule_out), strip(&learned_out));
        }
    }

    #[test]
    fn learned_backend_requires_heads() {
        let cfg = ReasonerConfig { backend: Backend::Learned, ..Default::default() };
        let kb = fixtures::daily_life_kb();
        let script = crate::synth::parse_script(fixtures::SCRIPT_MICROWAVE_CLOTH).unwrap();
        let stream = crate::synth::synthesize_observations(&kb, &script).unwrap();
        let records = parse_observations(&stream.observations_jsonl).unwrap();
        let vg = build_video_graph(&kb, &records).unwrap();
        assert!(matches!(reason(&vg, &kb, &cfg), Err(ReasonError::MissingHeads)));
    }

    #[test]
    fn deleting_an_object_leaves_other_events_alone() {
        let kb = fixtures::daily_life_kb();
        let script = crate::synth::parse_script(fixtures::SCRIPT_MICROWAVE_BOWL).unwrap();
        let stream = crate::synth::synthesize_observations(&kb, &script).unwrap();
        let records = parse_observations(&stream.observations_jsonl).unwrap();
        let vg = build_video_graph(&kb, &records).unwrap();
        let full = reason(&vg, &kb, &ReasonerConfig::default()).unwrap();

        let mut pruned = vg.clone();
        pruned.edge_tracks.retain(|(s, o, _), _| s != "hand_1" && o != "hand_1");
        pruned.node_tracks.retain(|(id, _), _| id != "hand_1");
        let partial = reason(&pruned, &kb, &ReasonerConfig::default()).unwrap();

        let keep: Vec<_> = full
            .events
            .iter()
            .filter(|e| e.participants.iter().all(|p| p.instance_id != "hand_1"))
            .cloned()
            .collect();
        assert_eq!(partial.events, keep);
    }

    #[test]
    fn explanation_round_trips() {
        let out = reason_script(fixtures::SCRIPT_MICROWAVE_CLOTH, &ReasonerConfig::default());
        for ev in &out.events {
            let (action, participants, pre, eff, time) =
                parse_explanation(&explain(ev)).unwrap();
            assert_eq!(action, ev.action);
            assert_eq!(
                participants,
                ev.participants.iter().map(|p| p.instance_id.clone()).collect::<Vec<_>>()
            );
            assert_eq!(pre, ev.pre);
            assert_eq!(eff, ev.eff);
            assert_eq!(time, ev.time);
        }
    }

    #[test]
    fn events_are_sorted_and_start_at_frame_two_or_later() {
        let out = reason_script(fixtures::SCRIPT_MICROWAVE_BOWL, &ReasonerConfig::default());
        let times: Vec<usize> = out.events.iter().map(|e| e.time).collect();
        let mut sorted = times.clone();
        sorted.sort_unstable();
        assert_eq!(times, sorted);
        assert!(times.iter().all(|t| *t >= 2));
    }
}
