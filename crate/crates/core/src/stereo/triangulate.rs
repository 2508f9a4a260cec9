use nalgebra::{Matrix4, Point2, Vector3};

use super::RelativePose;
use crate::model::{CameraModel, Joint3D};
use crate::Real;

/// Linear (DLT) triangulation from normalized image coordinates, camera 1
/// at the origin. `None` if the system is rank-deficient or the point is not
/// in front of both cameras.
pub(crate) fn triangulate_normalized<T: Real>(
    x1: &Point2<T>,
    x2: &Point2<T>,
    pose: &RelativePose<T>,
) -> Option<Vector3<T>> {
    let r = &pose.rotation;
    let t = &pose.translation;
    let (z, o) = (T::zero(), T::one());
    let p2 = |i: usize| [r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]];
    let (a, b, c) = (p2(0), p2(1), p2(2));
    let rows = [
        [-o, z, x1.x, z],
        [z, -o, x1.y, z],
        [
            x2.x * c[0] - a[0],
            x2.x * c[1] - a[1],
            x2.x * c[2] - a[2],
            x2.x * c[3] - a[3],
        ],
        [
            x2.y * c[0] - b[0],
            x2.y * c[1] - b[1],
            x2.y * c[2] - b[2],
            x2.y * c[3] - b[3],
        ],
    ];
    let m = Matrix4::from_fn(|i, j| rows[i][j]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let s = svd.singular_values;
    let mut order = [0, 1, 2, 3];
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).expect("finite singular values"));
    if !(s[order[2]] > T::default_epsilon() * T::lit(1e4) * s[order[0]]) {
        return None;
    }
    let h = v_t.row(order[3]);
    if h[3].abs() <= T::default_epsilon() * h.norm() {
        return None;
    }
    let p = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    let q = pose.transform(&p);
    (p.z > z && q.z > z).then_some(p)
}

/// Triangulates a pixel pair; invalid when degenerate or behind a camera.
pub fn triangulate<T: Real>(
    u1: &Point2<T>,
    u2: &Point2<T>,
    k1: &CameraModel<T>,
    k2: &CameraModel<T>,
    pose: &RelativePose<T>,
) -> Joint3D<T> {
    if !(u1.x.is_finite() && u1.y.is_finite() && u2.x.is_finite() && u2.y.is_finite()) {
        return Joint3D::invalid();
    }
    triangulate_normalized(&k1.normalize(u1), &k2.normalize(u2), pose).map_or_else(Joint3D::invalid, Joint3D::new)
}

/// Pixel reprojection errors of `p` in both views.
pub fn reprojection_errors<T: Real>(
    p: &Vector3<T>,
    u1: &Point2<T>,
    u2: &Point2<T>,
    k1: &CameraModel<T>,
    k2: &CameraModel<T>,
    pose: &RelativePose<T>,
) -> (T, T) {
    let e1 = (k1.project(p) - u1).norm();
    let e2 = (k2.project(&pose.transform(p)) - u2).norm();
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::Scene;
    use super::*;

    #[test]
    fn noise_free_points_reproject_exactly() {
        let scene = Scene::standard(200, 11);
        for p in &scene.points {
            let (u1, u2) = scene.project(p);
            let j = triangulate(&u1, &u2, &scene.k, &scene.k, &scene.pose);
            assert!(j.valid);
            let x = j.vector();
            assert!((x - p).norm() < 1e-9);
            let (e1, e2) = reprojection_errors(&x, &u1, &u2, &scene.k, &scene.k, &scene.pose);
            assert!(e1 < 1e-8 && e2 < 1e-8, "{e1} {e2}");
        }
    }

    #[test]
    fn scale_ambiguity_leaves_reprojections_unchanged() {
        let scene = Scene::standard(20, 12);
        let s = 3.7;
        let scaled = RelativePose {
            rotation: scene.pose.rotation,
            translation: scene.pose.translation * s,
        };
        for p in &scene.points {
            let (u1, u2) = scene.project(p);
            let (a1, a2) = reprojection_errors(p, &u1, &u2, &scene.k, &scene.k, &scene.pose);
            let (b1, b2) = reprojection_errors(&(p * s), &u1, &u2, &scene.k, &scene.k, &scaled);
            assert!((a1 - b1).abs() < 1e-9 && (a2 - b2).abs() < 1e-9);
        }
    }

    #[test]
    fn point_on_baseline_is_invalid() {
        let scene = Scene::standard(1, 13);
        // halfway between the camera centers
        let c2 = -(scene.pose.rotation.transpose() * scene.pose.translation);
        let p = c2 * 0.5;
        let (u1, u2) = scene.project(&p);
        let j = triangulate(&u1, &u2, &scene.k, &scene.k, &scene.pose);
        assert!(!j.valid);
    }

    #[test]
    fn behind_camera_is_invalid() {
        let scene = Scene::standard(1, 14);
        let p = -scene.points[0];
        let (u1, u2) = scene.project(&p);
        assert!(!triangulate(&u1, &u2, &scene.k, &scene.k, &scene.pose).valid);
    }

    #[test]
    fn epipolar_violation_gives_large_residual() {
        let scene = Scene::standard(1, 15);
        let p = scene.points[0];
        let (u1, mut u2) = scene.project(&p);
        u2.y += 50.0;
        let j = triangulate(&u1, &u2, &scene.k, &scene.k, &scene.pose);
        assert!(j.valid);
        let (e1, e2) = reprojection_errors(&j.vector(), &u1, &u2, &scene.k, &scene.k, &scene.pose);
        assert!(e1 + e2 > 20.0, "{e1} {e2}");
    }
}
