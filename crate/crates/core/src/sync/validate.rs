use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::FrameClock;

use super::{DriftModel, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSample {
    pub frame_index: usize,
    pub observed_ms: i64,
    pub propagated_ms: Option<i64>,
    /// `None` if the frame had no propagated timestamp.
    pub abs_error_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tol_ms: f64,
    pub samples: Vec<ValidationSample>,
    pub max_error_ms: f64,
    pub passed: bool,
}

impl ValidationReport {
    /// Frames whose propagated timestamp misses its observation by more than
    /// the tolerance.
    pub fn failing_frames(&self) -> Vec<usize> {
        self.samples
            .iter()
            .filter(|s| s.abs_error_ms.is_none_or(|e| e > self.tol_ms))
            .map(|s| s.frame_index)
            .collect()
    }
}

/// Compares propagated clocks against held-out observations.
pub fn validate(clocks: &[FrameClock], extra: &[Observation], tol_ms: f64) -> ValidationReport {
    let samples: Vec<ValidationSample> = extra
        .iter()
        .map(|o| {
            let propagated_ms = clocks.get(o.frame_index).and_then(|c| c.timestamp_ms);
            ValidationSample {
                frame_index: o.frame_index,
                observed_ms: o.timestamp_ms,
                propagated_ms,
                abs_error_ms: propagated_ms.map(|p| (p - o.timestamp_ms).abs() as f64),
            }
        })
        .collect();
    let max_error_ms = samples
        .iter()
        .map(|s| s.abs_error_ms.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    ValidationReport {
        tol_ms,
        passed: max_error_ms <= tol_ms,
        samples,
        max_error_ms,
    }
}

/// Held-out frames drawn in turn from three pools: the stable region, the
/// temporal boundaries (stable-region edges and video ends), and the whole
/// video. Frames already observed are never drawn.
pub fn draw_validation_frames(drift: &DriftModel, frame_count: usize, budget: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: BTreeSet<usize> = drift.observations.iter().map(|o| o.frame_index).collect();
    let available = frame_count.saturating_sub(taken.len());
    let budget = budget.min(available);
    let stable = drift.stable_region;
    let last = frame_count.saturating_sub(1);

    let mut boundary: Vec<usize> = Vec::new();
    for d in 1..=3usize {
        if let Some(f) = stable.first.checked_sub(d) {
            boundary.push(f);
        }
        boundary.push(stable.last + d);
        boundary.push(stable.first + d);
        boundary.push(stable.last.saturating_sub(d));
    }
    boundary.extend([1, last.saturating_sub(1), 0, last]);
    boundary.retain(|&f| f < frame_count);
    let mut boundary = boundary.into_iter();

    let mut out = Vec::with_capacity(budget);
    let mut pool = 0;
    let mut misses = 0;
    while out.len() < budget {
        let candidate = match pool % 3 {
            0 => Some(rng.random_range(stable.first..=stable.last.min(last))),
            1 => boundary.find(|f| !taken.contains(f)),
            _ => Some(rng.random_range(0..frame_count)),
        };
        pool += 1;
        match candidate {
            Some(f) if taken.insert(f) => {
                out.push(f);
                misses = 0;
            }
            _ => {
                misses += 1;
                // a saturated stable region falls back to the uniform pool
                if misses > 64 {
                    let f = (0..frame_count).find(|f| !taken.contains(f)).expect("frames available");
                    taken.insert(f);
                    out.push(f);
                    misses = 0;
                }
            }
        }
    }
    out
}
