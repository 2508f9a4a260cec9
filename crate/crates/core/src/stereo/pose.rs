use nalgebra::{Matrix3, Vector3};

use super::triangulate::triangulate_normalized;
use super::{Correspondence, StereoError};
use crate::model::CameraModel;
use crate::Real;

/// Camera 2 pose relative to camera 1: `x₂ = R x₁ + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> RelativePose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn transform(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }
}

/// Image-centered pinhole with `f = focal_scale · max(width, height)`.
pub fn pseudo_intrinsics<T: Real>(width: T, height: T, focal_scale: T) -> Result<CameraModel<T>, StereoError> {
    if !(width > T::zero() && height > T::zero() && focal_scale > T::zero()) {
        return Err(StereoError::Input(format!(
            "image size {width}x{height} and focal scale {focal_scale} must be positive"
        )));
    }
    let two = T::lit(2.0);
    let f = focal_scale * width.max(height);
    CameraModel::new(f, f, width / two, height / two, width, height).map_err(|e| StereoError::Input(e.to_string()))
}

/// `E = K₂ᵀ F K₁` with its singular values projected to `(σ, σ, 0)`, `σ` the
/// mean of the two largest, scaled to unit Frobenius norm.
pub fn essential_from_fundamental<T: Real>(f: &Matrix3<T>, k1: &CameraModel<T>, k2: &CameraModel<T>) -> Matrix3<T> {
    let e = k2.matrix().transpose() * f * k1.matrix();
    let svd = e.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut s = svd.singular_values;
    let mut idx = [0, 1, 2];
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite singular values"));
    let sigma = (s[idx[0]] + s[idx[1]]) / T::lit(2.0);
    s[idx[0]] = sigma;
    s[idx[1]] = sigma;
    s[idx[2]] = T::zero();
    let e = u * Matrix3::from_diagonal(&s) * v_t;
    e / e.norm()
}

/// The four `(R, t)` factorizations of `E`, `‖t‖ = 1`.
pub fn pose_candidates<T: Real>(e: &Matrix3<T>) -> [RelativePose<T>; 4] {
    let svd = e.svd(true, true);
    let mut u = svd.u.expect("u requested");
    let mut v_t = svd.v_t.expect("v requested");
    // order columns so the null direction is last
    let s = svd.singular_values;
    let null = s.imin();
    if null != 2 {
        u.swap_columns(null, 2);
        v_t.swap_rows(null, 2);
    }
    if u.determinant() < T::zero() {
        u.column_mut(2).neg_mut();
    }
    if v_t.determinant() < T::zero() {
        v_t.row_mut(2).neg_mut();
    }
    let (z, o) = (T::zero(), T::one());
    let w = Matrix3::new(z, -o, z, o, z, z, z, z, o);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t: Vector3<T> = u.column(2).into_owned();
    [(r1, t), (r1, -t), (r2, t), (r2, -t)].map(|(rotation, translation)| RelativePose {
        rotation,
        translation: translation.normalize(),
    })
}

/// Picks the factorization that places most correspondences in front of
/// both cameras. Fails unless the winner has a strict majority.
pub fn recover_pose<T: Real>(
    e: &Matrix3<T>,
    correspondences: &[Correspondence<T>],
    k1: &CameraModel<T>,
    k2: &CameraModel<T>,
) -> Result<RelativePose<T>, StereoError> {
    if correspondences.is_empty() {
        return Err(StereoError::InsufficientCorrespondences(0));
    }
    let normalized: Vec<_> = correspondences
        .iter()
        .map(|c| (k1.normalize(&c.u1), k2.normalize(&c.u2)))
        .collect();
    let mut best: Option<(usize, RelativePose<T>)> = None;
    for pose in pose_candidates(e) {
        let count = normalized
            .iter()
            .filter(|(x1, x2)| triangulate_normalized(x1, x2, &pose).is_some())
            .count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, pose));
        }
    }
    let (count, pose) = best.expect("four candidates");
    let fraction = count as f64 / correspondences.len() as f64;
    if count * 2 <= correspondences.len() {
        return Err(StereoError::CheiralityAmbiguity { best: fraction });
    }
    Ok(pose)
}
