//! Pipeline orchestration for two-view joint-angle estimation: config
//! handling, stage sequencing, artifact files and SVG plots.

pub mod artifacts;
pub mod config;
pub mod pipeline;
pub mod plot;
pub mod synth;

pub use config::{ConfigError, PipelineConfig};
pub use pipeline::{Pipeline, RunOptions, Stage, StageError, StageOutcome};
