use log::{debug, info};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::correspond::target_person;
use super::{
    bundle_adjust, collect_correspondences, essential_from_fundamental, estimate_fundamental, pseudo_intrinsics,
    recover_pose, reprojection_errors, triangulate, BundleConfig, BundleObservation, BundleProblem, RansacConfig,
    StereoError,
};
use crate::model::{FrameClock, Joint3D, PoseTensor, DEFAULT_CONF_THRESHOLD};
use crate::sync::FramePair;
use crate::track::TrackResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiftConfig {
    pub conf_threshold: f64,
    pub focal_scale: f64,
    pub ransac: RansacConfig,
    pub bundle: BundleConfig,
    /// Joints whose refined reprojection error exceeds this in either view are
    /// marked invalid.
    pub residual_gate_px: f64,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            focal_scale: 1.0,
            ransac: RansacConfig::default(),
            bundle: BundleConfig::default(),
            residual_gate_px: 10.0,
        }
    }
}

/// One camera's upstream artifacts.
#[derive(Debug, Clone, Copy)]
pub struct ViewInput<'a> {
    pub poses: &'a PoseTensor,
    pub track: &'a TrackResult,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LiftInput<'a> {
    pub a: ViewInput<'a>,
    pub b: ViewInput<'a>,
    pub pairing: &'a [FramePair],
    /// Clocks of view A, used to timestamp lifted frames.
    pub clocks_a: &'a [FrameClock],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedFrame {
    pub frame_a: usize,
    pub frame_b: usize,
    pub timestamp_ms: Option<i64>,
    pub joints: Vec<Joint3D<f64>>,
}

/// Estimated two-view geometry and refinement summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub k1: [[f64; 3]; 3],
    pub k2: [[f64; 3]; 3],
    pub fundamental: [[f64; 3]; 3],
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub tau_f: f64,
    pub correspondences: usize,
    pub inliers: usize,
    pub triangulated: usize,
    pub gated: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub best_iteration: usize,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftResult {
    pub frames: Vec<LiftedFrame>,
    pub geometry: Geometry,
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Correspondences → F → E → (R, t) → triangulation → bundle adjustment.
///
/// Every matched frame pair yields a skeleton; pairs where either view has
/// no target are all-invalid.
pub fn lift_sequence(input: &LiftInput<'_>, config: &LiftConfig) -> Result<LiftResult, StereoError> {
    let (a, b) = (input.a, input.b);
    let corr = collect_correspondences(a.track, b.track, a.poses, b.poses, input.pairing, config.conf_threshold)?;
    let fundamental = estimate_fundamental(&corr, &config.ransac)?;
    info!(
        "fundamental matrix: {} of {} correspondences are inliers",
        fundamental.inlier_count(),
        corr.len()
    );
    let k1 = pseudo_intrinsics(a.width, a.height, config.focal_scale)?;
    let k2 = pseudo_intrinsics(b.width, b.height, config.focal_scale)?;
    let essential = essential_from_fundamental(&fundamental.matrix, &k1, &k2);
    let inliers: Vec<_> = corr
        .iter()
        .zip(&fundamental.inliers)
        .filter(|(_, keep)| **keep)
        .map(|(c, _)| *c)
        .collect();
    let pose = recover_pose(&essential, &inliers, &k1, &k2)?;

    let mut points = Vec::new();
    let mut observations = Vec::new();
    let mut slots = Vec::new();
    // every confident joint is lifted; the Huber loss and the residual gate
    // below handle the ones outside the RANSAC consensus
    for c in &corr {
        let j = triangulate(&c.u1, &c.u2, &k1, &k2, &pose);
        if !j.valid {
            continue;
        }
        observations.push(BundleObservation {
            point: points.len(),
            u1: c.u1,
            u2: c.u2,
            conf1: c.conf1,
            conf2: c.conf2,
        });
        slots.push((c.frame_a, c.frame_b, c.joint));
        points.push(j.vector());
    }
    if points.len() < 8 {
        return Err(StereoError::DegenerateGeometry(format!(
            "only {} joints triangulate in front of both cameras",
            points.len()
        )));
    }
    let triangulated = points.len();
    let problem = BundleProblem::new(points, observations.clone(), pose, k1, k2, &fundamental, &config.bundle);
    let refined = bundle_adjust(problem, &config.bundle)?;
    debug!(
        "bundle adjustment: loss {} -> {} (best iteration {})",
        refined.initial_loss, refined.final_loss, refined.best_iteration
    );

    let mut lifted: std::collections::BTreeMap<(usize, usize), Vec<Joint3D<f64>>> = Default::default();
    let joints = a.poses.joints();
    for pair in input.pairing.iter().filter(|p| p.matched) {
        lifted.insert((pair.frame_a, pair.frame_b), vec![Joint3D::invalid(); joints]);
    }
    let mut gated = 0;
    for (obs, &(fa, fb, joint)) in observations.iter().zip(&slots) {
        let p = refined.points[obs.point];
        let (e1, e2) = reprojection_errors(&p, &obs.u1, &obs.u2, &k1, &k2, &refined.pose);
        let in_front = p.z > 0.0 && refined.pose.transform(&p).z > 0.0;
        if e1.max(e2) > config.residual_gate_px || !in_front {
            gated += 1;
            continue;
        }
        if let Some(skeleton) = lifted.get_mut(&(fa, fb)) {
            skeleton[joint] = Joint3D::new(p);
        }
    }

    let frames = lifted
        .into_iter()
        .map(|((frame_a, frame_b), joints)| {
            let present = target_person(a.track, a.poses, frame_a).is_some()
                && target_person(b.track, b.poses, frame_b).is_some();
            LiftedFrame {
                frame_a,
                frame_b,
                timestamp_ms: input.clocks_a.get(frame_a).and_then(|c| c.timestamp_ms),
                joints: if present {
                    joints
                } else {
                    vec![Joint3D::invalid(); joints.len()]
                },
            }
        })
        .collect();

    let t = refined.pose.translation;
    Ok(LiftResult {
        frames,
        geometry: Geometry {
            k1: rows(&k1.matrix()),
            k2: rows(&k2.matrix()),
            fundamental: rows(&fundamental.matrix),
            rotation: rows(&refined.pose.rotation),
            translation: [t.x, t.y, t.z],
            tau_f: config.ransac.tau,
            correspondences: corr.len(),
            inliers: inliers.len(),
            triangulated,
            gated,
            initial_loss: refined.initial_loss,
            final_loss: refined.final_loss,
            best_iteration: refined.best_iteration,
            loss_trace: refined.loss_trace,
        },
    })
}
