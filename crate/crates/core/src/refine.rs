//! Sliding-window temporal smoothing: runs of identical values shorter
//! than the window width are treated as detector noise and replaced by
//! the latest stable value.

use crate::graph::{StateTrack, VideoGraph};

#[derive(Debug, Clone, Copy)]
pub struct RefinementConfig {
    /// Window width in frames; 1 disables smoothing.
    pub window_width: usize,
}

impl RefinementConfig {
    pub fn new(window_width: usize) -> Self {
        assert!(window_width >= 1, "window width must be positive");
        Self { window_width }
    }
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self { window_width: 5 }
    }
}

/// Refines one value series. The initial run counts as stable regardless
/// of length, a run still open at the series end is kept, and every other
/// run shorter than the window is replaced by the preceding stable value.
pub fn refine_track<T: Copy + PartialEq>(series: &[T], cfg: RefinementConfig) -> Vec<T> {
    let theta = cfg.window_width;
    if series.is_empty() || theta <= 1 {
        return series.to_vec();
    }
    // Run-length encode.
    let mut runs: Vec<(T, usize)> = Vec::new();
    for &v in series {
        match runs.last_mut() {
            Some((last, len)) if *last == v => *len += 1,
            _ => runs.push((v, 1)),
        }
    }
    // Left-to-right replacement with re-merging. Output runs other than
    // the first and last are always >= theta, so one pass reaches the
    // fixpoint.
    let mut out: Vec<(T, usize)> = Vec::new();
    let last_idx = runs.len() - 1;
    for (i, (value, len)) in runs.into_iter().enumerate() {
        let short = len < theta;
        let keep = i == 0 || i == last_idx || !short;
        let v = if keep {
            value
        } else {
            out.last().expect("interior run has a predecessor").0
        };
        match out.last_mut() {
            Some((last, total)) if *last == v => *total += len,
            _ => out.push((v, len)),
        }
    }
    let mut result = Vec::with_capacity(series.len());
    for (v, len) in out {
        result.extend(std::iter::repeat_n(v, len));
    }
    result
}

fn refine_state_track(track: &StateTrack, cfg: RefinementConfig) -> StateTrack {
    // The undefined prefix is untouched; smoothing applies to the defined
    // suffix only.
    let first_defined = track.values.iter().position(|v| v.is_some());
    let Some(start) = first_defined else {
        return track.clone();
    };
    let defined: Vec<usize> = track.values[start..]
        .iter()
        .map(|v| v.expect("no gaps after first observation"))
        .collect();
    let refined = refine_track(&defined, cfg);
    let mut values = track.values[..start].to_vec();
    values.extend(refined.into_iter().map(Some));
    StateTrack { values }
}

/// Refines every node and edge track independently; the object registry
/// and bounding boxes are untouched.
pub fn refine_video_graph(vg: &VideoGraph, cfg: RefinementConfig) -> VideoGraph {
    let mut out = vg.clone();
    for track in out.node_tracks.values_mut() {
        *track = refine_state_track(track, cfg);
    }
    for track in out.edge_tracks.values_mut() {
        *track = refine_state_track(track, cfg);
    }
    out
}
