//! Uncalibrated two-view reconstruction.
//!
//! Joint correspondences of the tracked target feed a RANSAC fundamental
//! matrix fit. With image-centered pseudo-intrinsics the fundamental matrix
//! yields an essential matrix and a relative pose; joints are triangulated
//! and then refined jointly with the pose by [`bundle_adjust`].

mod bundle;
mod correspond;
mod epipolar;
mod fundamental;
mod lift;
mod pose;
#[cfg(test)]
mod testutil;
mod triangulate;

use thiserror::Error;

pub use bundle::{bundle_adjust, BundleConfig, BundleObservation, BundleProblem, BundleResult};
pub use correspond::{collect_correspondences, Correspondence};
pub use epipolar::{hartley_normalization, sampson_distance, sampson_error};
pub use fundamental::{eight_point, estimate_fundamental, FundamentalMatrix, RansacConfig};
pub use lift::{lift_sequence, Geometry, LiftConfig, LiftInput, LiftResult, LiftedFrame, ViewInput};
pub use pose::{essential_from_fundamental, pose_candidates, pseudo_intrinsics, recover_pose, RelativePose};
pub use triangulate::{reprojection_errors, triangulate};

#[derive(Debug, Error, PartialEq)]
pub enum StereoError {
    #[error("need at least 8 joint correspondences, have {0}")]
    InsufficientCorrespondences(usize),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("no pose candidate puts more than half the points in front of both cameras (best {best:.3})")]
    CheiralityAmbiguity { best: f64 },
    #[error("bundle adjustment diverged at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("invalid input: {0}")]
    Input(String),
}
