//! Complex-activity detection: first-order conjunctions over atomic
//! action events, matched greedily on disjoint earliest witnesses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::KnowledgeBase;
use crate::reason::ActionEvent;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("rule `{rule}` references unknown action `{action}`")]
    UnknownAction { rule: String, action: String },
    #[error("rule `{0}` has no required actions")]
    EmptyRule(String),
    #[error("rule `{rule}` binding references atom index {index} out of range")]
    BadBinding { rule: String, index: usize },
}

/// A complex activity defined as a conjunction of atomic actions.
/// `ordered` additionally requires witnesses in listed order; each entry
/// of `bindings` lists atom indices that must share a participant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityRule {
    pub name: String,
    pub actions: Vec<String>,
    #[serde(default)]
    pub ordered: bool,
    #[serde(default)]
    pub bindings: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityDetection {
    pub name: String,
    pub witnesses: Vec<ActionEvent>,
    pub span: (usize, usize),
}

pub fn parse_rules(text: &str) -> Result<Vec<ActivityRule>, ComposeError> {
    serde_json::from_str(text).map_err(|e| ComposeError::Parse(e.to_string()))
}

pub fn validate_rules(rules: &[ActivityRule], kb: &KnowledgeBase) -> Result<(), ComposeError> {
    for rule in rules {
        if rule.actions.is_empty() {
            return Err(ComposeError::EmptyRule(rule.name.clone()));
        }
        for action in &rule.actions {
            if kb.vocabulary.action_index(action).is_none() {
                return Err(ComposeError::UnknownAction {
                    rule: rule.name.clone(),
                    action: action.clone(),
                });
            }
        }
        for group in &rule.bindings {
            for &idx in group {
                if idx >= rule.actions.len() {
                    return Err(ComposeError::BadBinding { rule: rule.name.clone(), index: idx });
                }
            }
        }
    }
    Ok(())
}

fn shares_participant(a: &ActionEvent, b: &ActionEvent) -> bool {
    a.participants
        .iter()
        .any(|p| b.participants.iter().any(|q| q.instance_id == p.instance_id))
}

fn bindings_allow(
    rule: &ActivityRule,
    witnesses: &[Option<&ActionEvent>],
    atom: usize,
    candidate: &ActionEvent,
) -> bool {
    for group in &rule.bindings {
        if !group.contains(&atom) {
            continue;
        }
        for &other in group {
            if other == atom {
                continue;
            }
            if let Some(Some(w)) = witnesses.get(other) {
                if !shares_participant(w, candidate) {
                    return false;
                }
            }
        }
    }
    true
}

/// Greedy earliest-witness matching: scanning events in time order, each
/// rule repeatedly collects one disjoint witness set per detection.
pub fn detect_activities(
    events: &[ActionEvent],
    rules: &[ActivityRule],
    kb: &KnowledgeBase,
) -> Result<Vec<ActivityDetection>, ComposeError> {
    validate_rules(rules, kb)?;
    let mut detections = Vec::new();
    for rule in rules {
        let mut used = vec![false; events.len()];
        loop {
            let mut witnesses: Vec<Option<&ActionEvent>> = vec![None; rule.actions.len()];
            let mut chosen: Vec<usize> = Vec::new();
            for (i, event) in events.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let slot = if rule.ordered {
                    // Next unfilled atom only.
                    witnesses.iter().position(|w| w.is_none()).filter(|&s| {
                        rule.actions[s] == event.action
                            && bindings_allow(rule, &witnesses, s, event)
                    })
                } else {
                    (0..rule.actions.len()).find(|&s| {
                        witnesses[s].is_none()
                            && rule.actions[s] == event.action
                            && bindings_allow(rule, &witnesses, s, event)
                    })
                };
                if let Some(s) = slot {
                    witnesses[s] = Some(event);
                    chosen.push(i);
                    if witnesses.iter().all(|w| w.is_some()) {
                        break;
                    }
                }
            }
            if witnesses.iter().any(|w| w.is_none()) {
                break;
            }
            for &i in &chosen {
                used[i] = true;
            }
            let events: Vec<ActionEvent> =
                witnesses.into_iter().map(|w| w.unwrap().clone()).collect();
            let first = events.iter().map(|e| e.time).min().unwrap();
            let last = events.iter().map(|e| e.time).max().unwrap();
            detections.push(ActivityDetection {
                name: rule.name.clone(),
                witnesses: events,
                span: (first, last),
            });
        }
    }
    detections.sort_by(|a, b| a.span.0.cmp(&b.span.0).then_with(|| a.name.cmp(&b.name)));
    Ok(detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::StateKind;
    use crate::reason::{Backend, Participant};

    fn event(action: &str, who: &[&str], time: usize) -> ActionEvent {
        ActionEvent {
            action: action.to_string(),
            kind: StateKind::Relationship,
            participants: who
                .iter()
                .map(|id| Participant {
                    instance_id: id.to_string(),
                    category: id.split('_').next().unwrap().to_string(),
                })
                .collect(),
            time,
            locations: vec![None; who.len()],
            pre: "apart".into(),
            eff: "contacting".into(),
            backend: Backend::Rule,
        }
    }

    fn having_meal() -> ActivityRule {
        ActivityRule {
            name: "having_meal".into(),
            actions: vec!["eat".into(), "drink".into()],
            ordered: false,
            bindings: vec![],
        }
    }

    #[test]
    fn having_meal_fires_on_meal_scenario() {
        let kb = fixtures::daily_life_kb();
        let events = vec![
            event("pick", &["hand_1", "cup_2"], 35),
            event("drink", &["head_1", "cup_2"], 70),
            event("place", &["hand_1", "cup_2"], 180),
            event("pick", &["hand_2", "apple_1"], 180),
            event("eat", &["head_1", "apple_1"], 188),
        ];
        let detections = detect_activities(&events, &[having_meal()], &kb).unwrap();
        assert_eq!(detections.len(), 1);
        assert_eq!(detections[0].name, "having_meal");
        assert_eq!(detections[0].span, (70, 188));
    }

    #[test]
    fn missing_atom_means_no_detection() {
        let kb = fixtures::daily_life_kb();
        let events = vec![event("drink", &["head_1", "cup_2"], 70)];
        assert!(detect_activities(&events, &[having_meal()], &kb).unwrap().is_empty());
    }

    #[test]
    fn two_pairs_give_two_detections() {
        let kb = fixtures::daily_life_kb();
        let events = vec![
            event("eat", &["head_1", "apple_1"], 10),
            event("drink", &["head_1", "cup_2"], 20),
            event("eat", &["head_1", "bowl_1"], 30),
            event("drink", &["head_1", "bottle_1"], 40),
        ];
        let detections = detect_activities(&events, &[having_meal()], &kb).unwrap();
        assert_eq!(detections.len(), 2);
        // Greedy earliest matching pairs (10, 20) and (30, 40); brute-force
        // enumeration of disjoint pairings confirms 2 is the maximum.
        assert_eq!(detections[0].span, (10, 20));
        assert_eq!(detections[1].span, (30, 40));
    }

    #[test]
    fn unknown_action_rejected() {
        let kb = fixtures::daily_life_kb();
        let rule = ActivityRule {
            name: "bad".into(),
            actions: vec!["levitate".into()],
            ordered: false,
            bindings: vec![],
        };
        assert!(matches!(
            detect_activities(&[], &[rule], &kb),
            Err(ComposeError::UnknownAction { .. })
        ));
    }

    #[test]
    fn empty_rule_set_detects_nothing() {
        let kb = fixtures::daily_life_kb();
        let events = vec![event("eat", &["head_1", "apple_1"], 10)];
        assert!(detect_activities(&events, &[], &kb).unwrap().is_empty());
    }

    #[test]
    fn ordered_rule_requires_order() {
        let kb = fixtures::daily_life_kb();
        let mut rule = having_meal();
        rule.ordered = true; // eat must come before drink
        let events = vec![
            event("drink", &["head_1", "cup_2"], 20),
            event("eat", &["head_1", "apple_1"], 30),
        ];
        assert!(detect_activities(&events, &[rule.clone()], &kb).unwrap().is_empty());
        let events = vec![
            event("eat", &["head_1", "apple_1"], 10),
            event("drink", &["head_1", "cup_2"], 20),
        ];
        assert_eq!(detect_activities(&events, &[rule], &kb).unwrap().len(), 1);
    }

    #[test]
    fn binding_requires_shared_participant() {
        let kb = fixtures::daily_life_kb();
        let mut rule = having_meal();
        rule.bindings = vec![vec![0, 1]]; // same instance in both atoms
        let events = vec![
            event("eat", &["head_1", "apple_1"], 10),
            event("drink", &["head_2", "cup_2"], 20),
        ];
        assert!(detect_activities(&events, &[rule.clone()], &kb).unwrap().is_empty());
        let events = vec![
            event("eat", &["head_1", "apple_1"], 10),
            event("drink", &["head_1", "cup_2"], 20),
        ];
        assert_eq!(detect_activities(&events, &[rule], &kb).unwrap().len(), 1);
    }

    #[test]
    fn soundness_witnesses_satisfy_rule() {
        let kb = fixtures::daily_life_kb();
        let events = vec![
            event("eat", &["head_1", "apple_1"], 10),
            event("drink", &["head_1", "cup_2"], 20),
            event("drink", &["head_1", "cup_2"], 25),
        ];
        for d in detect_activities(&events, &[having_meal()], &kb).unwrap() {
            let mut need: Vec<&str> = vec!["eat", "drink"];
            for w in &d.witnesses {
                let pos = need.iter().position(|a| *a == w.action).expect("witness in multiset");
                need.remove(pos);
            }
            assert!(need.is_empty());
        }
    }

    #[test]
    fn adding_events_never_reduces_detections() {
        let kb = fixtures::daily_life_kb();
        let base = vec![
            event("eat", &["head_1", "apple_1"], 10),
            event("drink", &["head_1", "cup_2"], 20),
        ];
        let n_base = detect_activities(&base, &[having_meal()], &kb).unwrap().len();
        let mut more = base.clone();
        more.push(event("eat", &["head_1", "bowl_1"], 5));
        more.sort_by_key(|e| e.time);
        let n_more = detect_activities(&more, &[having_meal()], &kb).unwrap().len();
        assert!(n_more >= n_base);
    }
}
