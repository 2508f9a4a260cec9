//! Three-point joint angles and their evaluation against reference series.

mod metrics;
mod series;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{coco_joint_index, AngleSample, Joint3D};
use crate::Real;

pub use metrics::{align, angle_range, compare, mae, pearson, AlignedSeries, MetricReport};
pub use series::{resample, DEFAULT_MAX_GAP_MS};

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("series have no co-valid samples")]
    NoOverlap,
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("series has no valid samples")]
    NoData,
    #[error("invalid joint triple {name:?}: {reason}")]
    InvalidTriple { name: String, reason: String },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// An angle at `vertex` between the limbs towards `proximal` and `distal`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointTriple {
    pub name: String,
    pub proximal: usize,
    pub vertex: usize,
    pub distal: usize,
}

impl JointTriple {
    pub fn new(name: &str, proximal: usize, vertex: usize, distal: usize) -> Self {
        Self {
            name: name.to_owned(),
            proximal,
            vertex,
            distal,
        }
    }

    /// Builds a triple from COCO whole-body joint names.
    pub fn from_names(name: &str, proximal: &str, vertex: &str, distal: &str) -> Result<Self, KinematicsError> {
        let lookup = |joint: &str| {
            coco_joint_index(joint).ok_or_else(|| KinematicsError::InvalidTriple {
                name: name.to_owned(),
                reason: format!("unknown joint {joint:?}"),
            })
        };
        Ok(Self::new(name, lookup(proximal)?, lookup(vertex)?, lookup(distal)?))
    }

    pub fn indices(&self) -> [usize; 3] {
        [self.proximal, self.vertex, self.distal]
    }

    /// Checks that the indices are distinct and address a `joints`-long skeleton.
    pub fn validate(&self, joints: usize) -> Result<(), KinematicsError> {
        let [p, v, d] = self.indices();
        let fail = |reason: String| {
            Err(KinematicsError::InvalidTriple {
                name: self.name.clone(),
                reason,
            })
        };
        if p == v || v == d || p == d {
            return fail(format!("indices ({p}, {v}, {d}) are not distinct"));
        }
        if p.max(v).max(d) >= joints {
            return fail(format!("index out of range for {joints} joints"));
        }
        Ok(())
    }
}

/// Knees, elbows and hips of both sides in COCO whole-body indexing.
pub fn default_triples() -> Vec<JointTriple> {
    [
        ("left_knee", "left_hip", "left_knee", "left_ankle"),
        ("right_knee", "right_hip", "right_knee", "right_ankle"),
        ("left_elbow", "left_shoulder", "left_elbow", "left_wrist"),
        ("right_elbow", "right_shoulder", "right_elbow", "right_wrist"),
        ("left_hip", "left_shoulder", "left_hip", "left_knee"),
        ("right_hip", "right_shoulder", "right_hip", "right_knee"),
    ]
    .into_iter()
    .map(|(n, p, v, d)| JointTriple::from_names(n, p, v, d).expect("bundled joint names"))
    .collect()
}

/// Angle in degrees at the triple's vertex, `None` if a joint is invalid or
/// missing or a limb has zero length.
///
/// Evaluated as `atan2(‖u × v‖, u · v)`, which equals the clamped arccos of
/// the normalized dot product but keeps full precision near 0° and 180°.
pub fn joint_angle<T: Real>(skeleton: &[Joint3D<T>], triple: &JointTriple) -> Option<T> {
    let p = skeleton.get(triple.proximal)?.position()?;
    let v = skeleton.get(triple.vertex)?.position()?;
    let d = skeleton.get(triple.distal)?.position()?;
    let (a, b) = (p - v, d - v);
    if a.norm() == T::zero() || b.norm() == T::zero() {
        return None;
    }
    let angle = a.cross(&b).norm().atan2(a.dot(&b));
    angle.is_finite().then(|| angle * T::lit(180.0) / T::pi())
}

/// Angle series over timestamped skeletons.
///
/// Frames whose timestamp does not strictly exceed the previous kept one are
/// dropped, so the result can be resampled directly.
pub fn angle_series<'a, I>(frames: I, triple: &JointTriple) -> Vec<AngleSample>
where
    I: IntoIterator<Item = (i64, &'a [Joint3D<f64>])>,
{
    let mut out: Vec<AngleSample> = Vec::new();
    for (timestamp_ms, skeleton) in frames {
        if out.last().is_some_and(|s| s.timestamp_ms >= timestamp_ms) {
            continue;
        }
        out.push(AngleSample {
            timestamp_ms,
            angle_deg: joint_angle(skeleton, triple),
        });
    }
    out
}
