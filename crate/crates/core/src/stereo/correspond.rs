use nalgebra::Point2;

use crate::model::{Person, PoseTensor};
use crate::sync::FramePair;
use crate::track::TrackResult;
use crate::Real;

use super::StereoError;

/// The same joint of the target seen in both views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T: Real> {
    pub frame_a: usize,
    pub frame_b: usize,
    pub joint: usize,
    pub u1: Point2<T>,
    pub u2: Point2<T>,
    pub conf1: T,
    pub conf2: T,
}

/// The tracked target person of frame `t`, if any.
pub(crate) fn target_person<'a>(track: &TrackResult, poses: &'a PoseTensor, t: usize) -> Option<&'a Person> {
    let f = track.frames.get(t)?;
    let index = usize::try_from(f.index).ok()?;
    poses.person(t, index)
}

/// Joint pairs of the tracked targets over all matched frame pairs, kept
/// when the joint clears `conf_threshold` in both views.
pub fn collect_correspondences(
    track_a: &TrackResult,
    track_b: &TrackResult,
    poses_a: &PoseTensor,
    poses_b: &PoseTensor,
    pairing: &[FramePair],
    conf_threshold: f64,
) -> Result<Vec<Correspondence<f64>>, StereoError> {
    let mut out = Vec::new();
    for pair in pairing.iter().filter(|p| p.matched) {
        let (Some(pa), Some(pb)) = (
            target_person(track_a, poses_a, pair.frame_a),
            target_person(track_b, poses_b, pair.frame_b),
        ) else {
            continue;
        };
        for (joint, (ka, kb)) in pa.keypoints.iter().zip(&pb.keypoints).enumerate() {
            if ka.passes(conf_threshold) && kb.passes(conf_threshold) {
                out.push(Correspondence {
                    frame_a: pair.frame_a,
                    frame_b: pair.frame_b,
                    joint,
                    u1: ka.position(),
                    u2: kb.position(),
                    conf1: ka.confidence,
                    conf2: kb.confidence,
                });
            }
        }
    }
    if out.len() < 8 {
        return Err(StereoError::InsufficientCorrespondences(out.len()));
    }
    Ok(out)
}
