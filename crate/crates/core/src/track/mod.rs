//! Selection of one identity-consistent target per frame.
//!
//! Candidates are persons with enough confident joints. Between agent-chosen
//! anchor frames the target is followed with a constant-velocity
//! [`KalmanFilter`] over its confidence-weighted center, and each choice is
//! gated by box overlap with the last accepted target box.

mod anchors;
mod kalman;
mod tracker;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{bbox_of, BBox, Person, PoseTensor, DEFAULT_CONF_THRESHOLD};

pub use anchors::{anchor_scores, sample_anchor_frames, DEFAULT_FRAMES_PER_ANCHOR};
pub use kalman::{KalmanFilter, KalmanParams};
pub use tracker::{track, TrackFrame, TrackResult, TrackStatus};

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("tracking needs at least one anchor frame with a chosen person")]
    AnchorRequired,
    #[error("joint confidences sum to zero, center undefined")]
    UndefinedCenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    pub conf_threshold: f64,
    /// Minimum joints above `conf_threshold` for a person to be a candidate.
    pub min_valid_joints: usize,
    pub iou_gate: f64,
    pub warmup: usize,
    pub kalman: KalmanParams,
    /// Suppression radius, in frames, between anchor picks.
    pub anchor_nms_radius: usize,
    /// One agent anchor query per this many frames.
    pub frames_per_anchor: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            min_valid_joints: 6,
            iou_gate: 0.05,
            warmup: 5,
            kalman: KalmanParams::default(),
            anchor_nms_radius: 5,
            frames_per_anchor: DEFAULT_FRAMES_PER_ANCHOR,
        }
    }
}

impl TrackConfig {
    /// Anchor query budget for a video of `frames` frames.
    pub fn anchor_budget(&self, frames: usize) -> usize {
        frames.div_ceil(self.frames_per_anchor.max(1)).max(1)
    }
}

/// Confidence-weighted centroid of a person's joints.
pub fn weighted_center(person: &Person) -> Result<Vector2<f64>, TrackError> {
    let mut sum = Vector2::zeros();
    let mut weight = 0.0;
    for k in person
        .keypoints
        .iter()
        .filter(|k| k.x.is_finite() && k.y.is_finite() && k.confidence.is_finite() && k.confidence > 0.0)
    {
        sum += Vector2::new(k.x, k.y) * k.confidence;
        weight += k.confidence;
    }
    if weight > 0.0 {
        Ok(sum / weight)
    } else {
        Err(TrackError::UndefinedCenter)
    }
}

/// Intersection over union; zero when either box has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if a.area() <= 0.0 || b.area() <= 0.0 || union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// A person eligible for target selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub center: Vector2<f64>,
    pub bbox: BBox,
}

/// Eligible persons of frame `t`, in person order.
pub fn candidates(tensor: &PoseTensor, t: usize, config: &TrackConfig) -> Vec<Candidate> {
    let Some(frame) = tensor.frame(t) else {
        return Vec::new();
    };
    frame
        .persons
        .iter()
        .enumerate()
        .filter(|(_, p)| p.valid_joint_count(config.conf_threshold) >= config.min_valid_joints)
        .filter_map(|(index, p)| {
            Some(Candidate {
                index,
                center: weighted_center(p).ok()?,
                bbox: bbox_of(p, config.conf_threshold)?,
            })
        })
        .collect()
}

/// Index of the candidate nearest to `prediction`, lower index on ties, or
/// `-1` if there are none.
pub fn associate(prediction: &Vector2<f64>, candidates: &[Candidate]) -> i32 {
    let mut best: Option<(f64, usize)> = None;
    for c in candidates {
        let d = (c.center - prediction).norm();
        if best.is_none_or(|(bd, bi)| d < bd || (d == bd && c.index < bi)) {
            best = Some((d, c.index));
        }
    }
    best.map_or(-1, |(_, i)| i as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Keypoint;
    use approx::assert_relative_eq;

    fn person(joints: &[(f64, f64, f64)]) -> Person {
        Person::new(joints.iter().map(|&(x, y, c)| Keypoint::new(x, y, c)).collect())
    }

    #[test]
    fn center_examples() {
        let c = weighted_center(&person(&[(0.0, 0.0, 0.5), (10.0, 10.0, 0.5)])).unwrap();
        assert_relative_eq!(c, Vector2::new(5.0, 5.0));
        let c = weighted_center(&person(&[(0.0, 0.0, 1.0), (9.0, 9.0, 0.0)])).unwrap();
        assert_relative_eq!(c, Vector2::new(0.0, 0.0));
        let c = weighted_center(&person(&[(0.0, 0.0, 1.0), (6.0, 3.0, 2.0)])).unwrap();
        assert_relative_eq!(c, Vector2::new(4.0, 2.0));
        assert_eq!(
            weighted_center(&person(&[(1.0, 1.0, 0.0)])),
            Err(TrackError::UndefinedCenter)
        );
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_relative_eq!(iou(&a, &BBox::new(1.0, 0.0, 3.0, 2.0)), 1.0 / 3.0);
        assert_eq!(iou(&BBox::new(1.0, 1.0, 1.0, 3.0), &a), 0.0);
    }

    fn cand(index: usize, x: f64, y: f64) -> Candidate {
        Candidate {
            index,
            center: Vector2::new(x, y),
            bbox: BBox::new(x - 1.0, y - 1.0, x + 1.0, y + 1.0),
        }
    }

    #[test]
    fn association_examples() {
        let p = Vector2::new(0.0, 0.0);
        assert_eq!(associate(&p, &[cand(0, 7.0, 0.0), cand(1, 0.0, 3.0)]), 1);
        assert_eq!(associate(&p, &[]), -1);
        assert_eq!(associate(&p, &[cand(2, 3.0, 4.0), cand(1, -5.0, 0.0)]), 1);
    }
}
