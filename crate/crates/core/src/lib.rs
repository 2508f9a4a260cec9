//! Two-view markerless joint-angle reconstruction.
//!
//! The crate covers the whole numerical pipeline that turns two asynchronous,
//! uncalibrated multi-person 2D pose sequences into identity-consistent 3D
//! joint trajectories and joint-angle time series:
//!
//! * [`model`]: shared domain types and the pose JSONL schema,
//! * [`preproc`]: PPM raster I/O, gray-world balance, CLAHE, face blurring,
//! * [`agent`]: multimodal agent client (prompts, reply parsing, backends),
//! * [`sync`]: clock sampling, drift fitting, propagation and view alignment,
//! * [`track`]: anchor-conditioned Kalman identity tracking with IoU gating,
//! * [`stereo`]: fundamental matrix RANSAC, pose recovery, triangulation and
//!   bundle adjustment,
//! * [`kinematics`]: joint angles and evaluation metrics,
//! * [`synthgen`]: ground-truth scene generator used as a test oracle.
//!
//! Numerical code is generic over [`Real`]; the `*64` aliases below fix the
//! scalar to `f64`, which is what the pipeline uses.

pub mod agent;
pub mod kinematics;
pub mod model;
pub mod preproc;
pub mod scalar;
pub mod stereo;
pub mod sync;
pub mod synthgen;
pub mod track;

pub use scalar::Real;

pub type CameraModel64 = model::CameraModel<f64>;
pub type Joint3D64 = model::Joint3D<f64>;
pub type KalmanFilter64 = track::KalmanFilter<f64>;
pub type FundamentalMatrix64 = stereo::FundamentalMatrix<f64>;
pub type RelativePose64 = stereo::RelativePose<f64>;
pub type Correspondence64 = stereo::Correspondence<f64>;
pub type BundleProblem64 = stereo::BundleProblem<f64>;
pub type JointTriple = kinematics::JointTriple;
