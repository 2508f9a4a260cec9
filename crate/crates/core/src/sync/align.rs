use log::warn;
use serde::{Deserialize, Serialize};

use crate::model::FrameClock;

/// A frame of view A paired with a frame of view B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FramePair {
    pub frame_a: usize,
    pub frame_b: usize,
    /// `|t_a - t_b|` in ms.
    pub dt_ms: i64,
    /// False when `dt_ms` exceeds half the larger frame period.
    pub matched: bool,
}

impl FramePair {
    pub fn transposed(&self) -> Self {
        Self {
            frame_a: self.frame_b,
            frame_b: self.frame_a,
            ..*self
        }
    }
}

fn timed(clocks: &[FrameClock]) -> Vec<(usize, i64)> {
    clocks
        .iter()
        .filter_map(|c| c.timestamp_ms.map(|t| (c.frame_index, t)))
        .collect()
}

fn mean_period(timed: &[(usize, i64)]) -> f64 {
    match timed {
        [first, .., last] if last.0 > first.0 => (last.1 - first.1) as f64 / (last.0 - first.0) as f64,
        _ => 0.0,
    }
}

/// Up to two frames of `other` on each side of `t`, by timestamp.
fn neighbours(other: &[(usize, i64)], t: i64) -> impl Iterator<Item = usize> + '_ {
    let split = other.partition_point(|&(_, u)| u < t);
    split.saturating_sub(2)..(split + 2).min(other.len())
}

/// Greedy one-to-one nearest-timestamp pairing.
///
/// Candidate pairs link every frame to the two closest frames on either side
/// in the other view; they are accepted in order of increasing `|Δt|`, each
/// frame at most once. The ordering key is symmetric in the two views, so
/// swapping the inputs transposes the result. Output is sorted by `frame_a`.
pub fn align_views(clocks_a: &[FrameClock], clocks_b: &[FrameClock]) -> Vec<FramePair> {
    let mut a = timed(clocks_a);
    let mut b = timed(clocks_b);
    a.sort_by_key(|&(f, t)| (t, f));
    b.sort_by_key(|&(f, t)| (t, f));
    let (Some(a_range), Some(b_range)) = (a.first().zip(a.last()), b.first().zip(b.last())) else {
        warn!("cannot align views: a view has no timestamps");
        return Vec::new();
    };
    if a_range.1 .1 < b_range.0 .1 || b_range.1 .1 < a_range.0 .1 {
        warn!("cannot align views: time ranges do not overlap");
        return Vec::new();
    }
    let mut by_frame_a = a.clone();
    let mut by_frame_b = b.clone();
    by_frame_a.sort();
    by_frame_b.sort();
    let half_period = mean_period(&by_frame_a).max(mean_period(&by_frame_b)) / 2.0;

    let mut candidates: Vec<(i64, i64, usize, usize, usize)> = Vec::new();
    let mut push = |fa: usize, ta: i64, fb: usize, tb: i64| {
        candidates.push(((ta - tb).abs(), ta + tb, fa + fb, fa, fb));
    };
    for &(fa, ta) in &a {
        for j in neighbours(&b, ta) {
            push(fa, ta, b[j].0, b[j].1);
        }
    }
    for &(fb, tb) in &b {
        for i in neighbours(&a, tb) {
            push(a[i].0, a[i].1, fb, tb);
        }
    }
    candidates.sort_by_key(|&(dt, ts, fs, fa, fb)| (dt, ts, fs, fa.min(fb), fa.max(fb)));
    candidates.dedup();

    let max_a = by_frame_a.last().map_or(0, |x| x.0) + 1;
    let max_b = by_frame_b.last().map_or(0, |x| x.0) + 1;
    let mut used_a = vec![false; max_a];
    let mut used_b = vec![false; max_b];
    let mut pairs = Vec::new();
    for (dt, _, _, fa, fb) in candidates {
        if used_a[fa] || used_b[fb] {
            continue;
        }
        used_a[fa] = true;
        used_b[fb] = true;
        pairs.push(FramePair {
            frame_a: fa,
            frame_b: fb,
            dt_ms: dt,
            matched: dt as f64 <= half_period,
        });
    }
    pairs.sort_by_key(|p| (p.frame_a, p.frame_b));
    pairs
}
