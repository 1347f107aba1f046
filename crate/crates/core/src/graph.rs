//! Scene-graph / video-graph data model: per-frame semantic state over
//! tracked object instances, and extraction of raw state transitions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::KnowledgeBase;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown object category `{category}`")]
    UnknownCategory { line: usize, category: String },
    #[error("line {line}: unknown state value `{value}`")]
    UnknownValue { line: usize, value: String },
    #[error("line {line}: unknown instance `{id}`")]
    UnknownInstance { line: usize, id: String },
    #[error("line {line}: instance `{id}` changes category from `{old}` to `{new}`")]
    CategoryChange { line: usize, id: String, old: String, new: String },
    #[error("line {line}: conflicting observation for {key} at frame {frame}")]
    ConflictingObservation { line: usize, key: String, frame: usize },
    #[error("line {line}: domain error: {message}")]
    Domain { line: usize, message: String },
    #[error("line {line}: invalid bounding box for `{id}`")]
    InvalidBBox { line: usize, id: String },
    #[error("line {line}: frame index {frame} is not positive")]
    BadFrame { line: usize, frame: i64 },
    #[error("empty video: no observations")]
    EmptyVideo,
    #[error("unknown instance `{0}`")]
    NoSuchInstance(String),
    #[error("domain {0} not applicable to `{1}`")]
    NotApplicable(usize, String),
}

type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct ObjectInstance {
    pub instance_id: String,
    pub category: String,
    /// frame index -> box, sparse; boxes carry forward for location queries.
    pub track: BTreeMap<usize, BBox>,
}

impl ObjectInstance {
    /// Last known box at or before `frame`.
    pub fn location_at(&self, frame: usize) -> Option<BBox> {
        self.track.range(..=frame).next_back().map(|(_, b)| *b)
    }
}

/// Which side of the state model a track lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Attribute,
    Relationship,
}

/// Key of one state track inside the video graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TrackKey {
    /// (instance, attribute-domain index)
    Node(String, usize),
    /// (subject instance, object instance, relationship-domain index)
    Edge(String, String, usize),
}

/// Per-frame state values of one node or edge; `None` before the first
/// observation. Values index into the domain-wide value vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrack {
    pub values: Vec<Option<usize>>,
}

/// Node-track key: (object instance, attribute-domain index).
pub type NodeKey = (String, usize);
/// Edge-track key: (subject instance, object instance, relationship-domain index).
pub type EdgeKey = (String, String, usize);

#[derive(Debug, Clone)]
pub struct VideoGraph {
    pub frame_count: usize,
    pub objects: BTreeMap<String, ObjectInstance>,
    pub node_tracks: BTreeMap<NodeKey, StateTrack>,
    pub edge_tracks: BTreeMap<EdgeKey, StateTrack>,
}

/// A raw state change between consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEvent {
    pub kind: StateKind,
    /// 1 participant for attributes, 2 (subject, object) for relationships.
    pub participants: Vec<String>,
    pub pre: String,
    pub eff: String,
    /// Frame at which the new value first holds (>= 2).
    pub time: usize,
    pub locations: Vec<Option<BBox>>,
}

// Observation stream schema (JSON Lines).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub frame: i64,
    #[serde(default)]
    pub objects: Vec<ObjectObs>,
    #[serde(default)]
    pub attributes: Vec<AttributeObs>,
    #[serde(default)]
    pub relationships: Vec<RelationshipObs>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectObs {
    pub id: String,
    pub category: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeObs {
    pub id: String,
    pub value: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationshipObs {
    pub subject: String,
    pub object: String,
    pub value: String,
}

/// Parses a JSON Lines observation stream. Blank lines are skipped.
pub fn parse_observations(text: &str) -> Result<Vec<(usize, ObservationRecord)>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ObservationRecord = serde_json::from_str(line)
            .map_err(|e| GraphError::Parse { line: lineno, message: e.to_string() })?;
        records.push((lineno, rec));
    }
    Ok(records)
}

/// Builds a video graph from parsed observations. States carry forward
/// between observed frames; before the first observation a track is
/// undefined and its first observation fires no transition.
pub fn build_video_graph(
    kb: &KnowledgeBase,
    records: &[(usize, ObservationRecord)],
) -> Result<VideoGraph> {
    if records.is_empty() {
        return Err(GraphError::EmptyVideo);
    }
    let mut frame_count = 0usize;
    for (lineno, rec) in records {
        if rec.frame < 1 {
            return Err(GraphError::BadFrame { line: *lineno, frame: rec.frame });
        }
        frame_count = frame_count.max(rec.frame as usize);
    }

    let mut objects: BTreeMap<String, ObjectInstance> = BTreeMap::new();
    // Sparse observed values per track, frame -> (line, value index).
    let mut node_obs: BTreeMap<NodeKey, BTreeMap<usize, (usize, usize)>> = BTreeMap::new();
    let mut edge_obs: BTreeMap<EdgeKey, BTreeMap<usize, (usize, usize)>> = BTreeMap::new();

    for (lineno, rec) in records {
        let frame = rec.frame as usize;
        let line = *lineno;
        for obj in &rec.objects {
            if kb.vocabulary.object_index(&obj.category).is_none() {
                return Err(GraphError::UnknownCategory {
                    line,
                    category: obj.category.clone(),
                });
            }
            let [x, y, w, h] = obj.bbox;
            if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() {
                return Err(GraphError::InvalidBBox { line, id: obj.id.clone() });
            }
            let entry = objects.entry(obj.id.clone()).or_insert_with(|| ObjectInstance {
                instance_id: obj.id.clone(),
                category: obj.category.clone(),
                track: BTreeMap::new(),
            });
            if entry.category != obj.category {
                return Err(GraphError::CategoryChange {
                    line,
                    id: obj.id.clone(),
                    old: entry.category.clone(),
                    new: obj.category.clone(),
                });
            }
            entry.track.insert(frame, BBox { x, y, w, h });
        }
        for a in &rec.attributes {
            let inst = objects
                .get(&a.id)
                .ok_or_else(|| GraphError::UnknownInstance { line, id: a.id.clone() })?;
            let value_idx = kb
                .vocabulary
                .attribute_index(&a.value)
                .ok_or_else(|| GraphError::UnknownValue { line, value: a.value.clone() })?;
            let domain_idx = kb
                .attribute_domain_of(&a.value)
                .expect("vocabulary value always belongs to a domain");
            if !kb.attribute_domains[domain_idx].objects.contains(&inst.category) {
                return Err(GraphError::Domain {
                    line,
                    message: format!(
                        "attribute `{}` does not apply to `{}` (category `{}`)",
                        a.value, a.id, inst.category
                    ),
                });
            }
            let per_frame = node_obs.entry((a.id.clone(), domain_idx)).or_default();
            if let Some((_, prev)) = per_frame.get(&frame) {
                if *prev != value_idx {
                    return Err(GraphError::ConflictingObservation {
                        line,
                        key: format!("attribute of `{}`", a.id),
                        frame,
                    });
                }
            }
            per_frame.insert(frame, (line, value_idx));
        }
        for r in &rec.relationships {
            let subj = objects
                .get(&r.subject)
                .ok_or_else(|| GraphError::UnknownInstance { line, id: r.subject.clone() })?;
            let obj = objects
                .get(&r.object)
                .ok_or_else(|| GraphError::UnknownInstance { line, id: r.object.clone() })?;
            let value_idx = kb
                .vocabulary
                .relationship_index(&r.value)
                .ok_or_else(|| GraphError::UnknownValue { line, value: r.value.clone() })?;
            let domain_idx = kb
                .relationship_domain_of(&r.value)
                .expect("vocabulary value always belongs to a domain");
            let domain = &kb.relationship_domains[domain_idx];
            if !domain.subjects.contains(&subj.category) || !domain.objects.contains(&obj.category)
            {
                return Err(GraphError::Domain {
                    line,
                    message: format!(
                        "relationship `{}` does not apply to (`{}`, `{}`)",
                        r.value, r.subject, r.object
                    ),
                });
            }
            let key = (r.subject.clone(), r.object.clone(), domain_idx);
            let per_frame = edge_obs.entry(key).or_default();
            if let Some((_, prev)) = per_frame.get(&frame) {
                if *prev != value_idx {
                    return Err(GraphError::ConflictingObservation {
                        line,
                        key: format!("relationship (`{}`, `{}`)", r.subject, r.object),
                        frame,
                    });
                }
            }
            per_frame.insert(frame, (line, value_idx));
        }
    }

    let densify = |obs: &BTreeMap<usize, (usize, usize)>| -> StateTrack {
        let mut values = vec![None; frame_count];
        let mut current = None;
        let mut next_frames = obs.keys().copied().peekable();
        let mut next = next_frames.next();
        for t in 1..=frame_count {
            if next == Some(t) {
                current = Some(obs[&t].1);
                next = next_frames.next();
            }
            values[t - 1] = current;
        }
        StateTrack { values }
    };

    let node_tracks = node_obs.iter().map(|(k, v)| (k.clone(), densify(v))).collect();
    let edge_tracks = edge_obs.iter().map(|(k, v)| (k.clone(), densify(v))).collect();

    Ok(VideoGraph { frame_count, objects, node_tracks, edge_tracks })
}

impl VideoGraph {
    /// Attribute value track of one instance, as (frame, value-name) pairs
    /// over the frames where the track is defined.
    pub fn attribute_track(
        &self,
        kb: &KnowledgeBase,
        instance_id: &str,
        domain_idx: usize,
    ) -> Result<Vec<(usize, String)>> {
        if !self.objects.contains_key(instance_id) {
            return Err(GraphError::NoSuchInstance(instance_id.to_string()));
        }
        if domain_idx >= kb.attribute_domains.len() {
            return Err(GraphError::NotApplicable(domain_idx, instance_id.to_string()));
        }
        let Some(track) = self.node_tracks.get(&(instance_id.to_string(), domain_idx)) else {
            return Ok(Vec::new());
        };
        Ok(track
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                v.map(|idx| (i + 1, kb.vocabulary.attributes[idx].clone()))
            })
            .collect())
    }

    /// Relationship value track of one (subject, object) edge.
    pub fn relationship_track(
        &self,
        kb: &KnowledgeBase,
        subject: &str,
        object: &str,
        domain_idx: usize,
    ) -> Result<Vec<(usize, String)>> {
        for id in [subject, object] {
            if !self.objects.contains_key(id) {
                return Err(GraphError::NoSuchInstance(id.to_string()));
            }
        }
        let key = (subject.to_string(), object.to_string(), domain_idx);
        let Some(track) = self.edge_tracks.get(&key) else {
            return Ok(Vec::new());
        };
        Ok(track
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                v.map(|idx| (i + 1, kb.vocabulary.relationships[idx].clone()))
            })
            .collect())
    }

    /// Materializes the scene graph of frame `t` as (key -> value name) maps.
    pub fn scene_graph(
        &self,
        kb: &KnowledgeBase,
        t: usize,
    ) -> (BTreeMap<NodeKey, String>, BTreeMap<EdgeKey, String>) {
        let mut nodes = BTreeMap::new();
        for ((id, dom), track) in &self.node_tracks {
            if let Some(Some(v)) = track.values.get(t - 1) {
                nodes.insert((id.clone(), *dom), kb.vocabulary.attributes[*v].clone());
            }
        }
        let mut edges = BTreeMap::new();
        for ((s, o, dom), track) in &self.edge_tracks {
            if let Some(Some(v)) = track.values.get(t - 1) {
                edges.insert(
                    (s.clone(), o.clone(), *dom),
                    kb.vocabulary.relationships[*v].clone(),
                );
            }
        }
        (nodes, edges)
    }

    /// One event per consecutive-frame value change in every track,
    /// sorted by time then participant ids. Event time is the frame at
    /// which the new value first holds.
    pub fn detect_transitions(&self, kb: &KnowledgeBase) -> Vec<TransitionEvent> {
        let mut events = Vec::new();
        for ((id, _dom), track) in &self.node_tracks {
            let inst = &self.objects[id];
            for t in 2..=self.frame_count {
                if let (Some(prev), Some(cur)) =
                    (track.values[t - 2], track.values[t - 1])
                {
                    if prev != cur {
                        events.push(TransitionEvent {
                            kind: StateKind::Attribute,
                            participants: vec![id.clone()],
                            pre: kb.vocabulary.attributes[prev].clone(),
                            eff: kb.vocabulary.attributes[cur].clone(),
                            time: t,
                            locations: vec![inst.location_at(t)],
                        });
                    }
                }
            }
        }
        for ((s, o, _dom), track) in &self.edge_tracks {
            let subj = &self.objects[s];
            let obj = &self.objects[o];
            for t in 2..=self.frame_count {
                if let (Some(prev), Some(cur)) =
                    (track.values[t - 2], track.values[t - 1])
                {
                    if prev != cur {
                        events.push(TransitionEvent {
                            kind: StateKind::Relationship,
                            participants: vec![s.clone(), o.clone()],
                            pre: kb.vocabulary.relationships[prev].clone(),
                            eff: kb.vocabulary.relationships[cur].clone(),
                            time: t,
                            locations: vec![subj.location_at(t), obj.location_at(t)],
                        });
                    }
                }
            }
        }
        events.sort_by(|a, b| {
            a.time.cmp(&b.time).then_with(|| a.participants.cmp(&b.participants))
        });
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn graph_from(lines: &str) -> Result<VideoGraph> {
        let kb = fixtures::daily_life_kb();
        let records = parse_observations(lines)?;
        build_video_graph(&kb, &records)
    }

    #[test]
    fn two_frame_attribute_transition() {
        let kb = fixtures::daily_life_kb();
        let vg = graph_from(concat!(
            r#"{"frame":1,"objects":[{"id":"microwave_1","category":"microwave","bbox":[0,0,10,10]}],"attributes":[{"id":"microwave_1","value":"closed"}]}"#,
            "\n",
            r#"{"frame":2,"attributes":[{"id":"microwave_1","value":"open"}]}"#,
        ))
        .unwrap();
        assert_eq!(vg.frame_count, 2);
        let track = vg.attribute_track(&kb, "microwave_1", 0).unwrap();
        assert_eq!(track, vec![(1, "closed".into()), (2, "open".into())]);
        let events = vg.detect_transitions(&kb);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].time, 2);
        assert_eq!(events[0].pre, "closed");
        assert_eq!(events[0].eff, "open");
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(graph_from(""), Err(GraphError::EmptyVideo)));
    }

    #[test]
    fn inapplicable_attribute_is_domain_error() {
        let res = graph_from(
            r#"{"frame":1,"objects":[{"id":"cup_1","category":"cup","bbox":[0,0,5,5]}],"attributes":[{"id":"cup_1","value":"closed"}]}"#,
        );
        assert!(matches!(res, Err(GraphError::Domain { .. })));
    }

    #[test]
    fn carry_forward_fills_unobserved_frames() {
        let kb = fixtures::daily_life_kb();
        let vg = graph_from(concat!(
            r#"{"frame":1,"objects":[{"id":"microwave_1","category":"microwave","bbox":[0,0,10,10]}],"attributes":[{"id":"microwave_1","value":"closed"}]}"#,
            "\n",
            r#"{"frame":5,"attributes":[{"id":"microwave_1","value":"open"}]}"#,
        ))
        .unwrap();
        let track = vg.attribute_track(&kb, "microwave_1", 0).unwrap();
        assert_eq!(
            track.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>(),
            vec!["closed", "closed", "closed", "closed", "open"]
        );
        // The change still fires exactly once, at the observed frame.
        let events = vg.detect_transitions(&kb);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].time, 5);
    }

    #[test]
    fn first_observation_fires_no_transition() {
        let kb = fixtures::daily_life_kb();
        let vg = graph_from(concat!(
            r#"{"frame":1,"objects":[{"id":"microwave_1","category":"microwave","bbox":[0,0,10,10]}]}"#,
            "\n",
            r#"{"frame":3,"attributes":[{"id":"microwave_1","value":"open"}]}"#,
        ))
        .unwrap();
        assert!(vg.detect_transitions(&kb).is_empty());
        let track = vg.attribute_track(&kb, "microwave_1", 0).unwrap();
        assert_eq!(track, vec![(3, "open".into())]);
    }

    #[test]
    fn conflicting_observation_rejected() {
        let res = graph_from(concat!(
            r#"{"frame":1,"objects":[{"id":"microwave_1","category":"microwave","bbox":[0,0,10,10]}],"attributes":[{"id":"microwave_1","value":"closed"}]}"#,
            "\n",
            r#"{"frame":1,"attributes":[{"id":"microwave_1","value":"open"}]}"#,
        ));
        assert!(matches!(res, Err(GraphError::ConflictingObservation { .. })));
    }

    #[test]
    fn category_change_rejected() {
        let res = graph_from(concat!(
            r#"{"frame":1,"objects":[{"id":"x","category":"cup","bbox":[0,0,5,5]}]}"#,
            "\n",
            r#"{"frame":2,"objects":[{"id":"x","category":"bowl","bbox":[0,0,5,5]}]}"#,
        ));
        assert!(matches!(res, Err(GraphError::CategoryChange { .. })));
    }

    #[test]
    fn relationship_edge_transition() {
        let kb = fixtures::daily_life_kb();
        let vg = graph_from(concat!(
            r#"{"frame":241,"objects":[{"id":"hand_2","category":"hand","bbox":[0,0,5,5]},{"id":"cloth_1","category":"cloth","bbox":[9,9,5,5]}],"relationships":[{"subject":"hand_2","object":"cloth_1","value":"not_holding"}]}"#,
            "\n",
            r#"{"frame":242,"relationships":[{"subject":"hand_2","object":"cloth_1","value":"holding"}]}"#,
        ))
        .unwrap();
        let events = vg.detect_transitions(&kb);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].time, 242);
        assert_eq!(events[0].kind, StateKind::Relationship);
        assert_eq!(events[0].participants, vec!["hand_2", "cloth_1"]);
    }

    #[test]
    fn simultaneous_transitions_are_distinct_events() {
        let kb = fixtures::daily_life_kb();
        let vg = graph_from(concat!(
            r#"{"frame":1,"objects":[{"id":"hand_1","category":"hand","bbox":[0,0,5,5]},{"id":"cup_2","category":"cup","bbox":[9,9,5,5]},{"id":"microwave_1","category":"microwave","bbox":[20,20,9,9]}],"relationships":[{"subject":"hand_1","object":"cup_2","value":"not_holding"}],"attributes":[{"id":"microwave_1","value":"closed"}]}"#,
            "\n",
            r#"{"frame":2,"relationships":[{"subject":"hand_1","object":"cup_2","value":"holding"}],"attributes":[{"id":"microwave_1","value":"open"}]}"#,
        ))
        .unwrap();
        let events = vg.detect_transitions(&kb);
        assert_eq!(events.len(), 2);
        assert!(events.iter().all(|e| e.time == 2));
    }

    #[test]
    fn event_count_matches_brute_force() {
        let kb = fixtures::daily_life_kb();
        let vg = graph_from(concat!(
            r#"{"frame":1,"objects":[{"id":"microwave_1","category":"microwave","bbox":[0,0,10,10]}],"attributes":[{"id":"microwave_1","value":"closed"}]}"#,
            "\n",
            r#"{"frame":2,"attributes":[{"id":"microwave_1","value":"open"}]}"#,
            "\n",
            r#"{"frame":3,"attributes":[{"id":"microwave_1","value":"closed"}]}"#,
            "\n",
            r#"{"frame":4,"attributes":[{"id":"microwave_1","value":"closed"}]}"#,
        ))
        .unwrap();
        let brute: usize = vg
            .node_tracks
            .values()
            .chain(vg.edge_tracks.values())
            .map(|t| {
                t.values
                    .windows(2)
                    .filter(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if a != b))
                    .count()
            })
            .sum();
        assert_eq!(vg.detect_transitions(&kb).len(), brute);
    }
}
