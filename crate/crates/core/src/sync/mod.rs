//! Per-frame clocks from sparse agent readings, and cross-view pairing.
//!
//! The flow for one video is [`sample_initial`] → agent queries →
//! [`fit_drift`] → repeated [`refine`] rounds → [`propagate`] →
//! [`validate`]. [`synchronize_video`] runs the whole loop against an
//! [`AgentBackend`](crate::agent::AgentBackend); [`align_views`] then pairs
//! the frames of two synchronized videos.

mod align;
mod drift;
mod propagate;
mod run;
mod sampling;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentError;
use crate::model::FrameClock;

pub use align::{align_views, FramePair};
pub use drift::{fit_drift, refine, DriftModel, FrameSpan};
pub use propagate::propagate;
pub use run::{synchronize_video, VideoSync};
pub use sampling::sample_initial;
pub use validate::{draw_validation_frames, validate, ValidationReport, ValidationSample};

pub(crate) use sampling::div_round_half_even;

/// Default tolerance on validation samples, in ms.
pub const DEFAULT_VALIDATION_TOL_MS: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("need at least 2 valid clock observations, have {0}")]
    InsufficientData(usize),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// One agent clock reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub frame_index: usize,
    pub timestamp_ms: i64,
}

/// Budgets and tolerances of the synchronization loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncParams {
    pub initial_budget: usize,
    pub refine_budget: usize,
    pub max_refine_rounds: usize,
    pub validation_budget: usize,
    /// Residual agreement tolerance as a fraction of the nominal frame period.
    pub tol_period_fraction: f64,
    pub validation_tol_ms: f64,
    pub seed: u64,
}

impl Default for SyncParams {
    fn default() -> Self {
        Self {
            initial_budget: 12,
            refine_budget: 8,
            max_refine_rounds: 12,
            validation_budget: 6,
            tol_period_fraction: 0.6,
            validation_tol_ms: DEFAULT_VALIDATION_TOL_MS,
            seed: 0,
        }
    }
}

impl SyncParams {
    pub fn tol_ms(&self, nominal_fps: f64) -> f64 {
        self.tol_period_fraction * 1000.0 / nominal_fps
    }
}

/// Clocks of both views plus their frame pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncMap {
    pub views: Vec<VideoSync>,
    pub pairing: Vec<FramePair>,
}

impl SyncMap {
    pub fn clocks(&self, video_id: &str) -> Option<&[FrameClock]> {
        self.views
            .iter()
            .find(|v| v.video_id == video_id)
            .map(|v| v.clocks.as_slice())
    }

    pub fn matched_pairs(&self) -> impl Iterator<Item = &FramePair> + '_ {
        self.pairing.iter().filter(|p| p.matched)
    }
}
