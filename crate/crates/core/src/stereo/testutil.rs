//! Known two-camera geometry for unit tests.

use nalgebra::{Matrix3, Point2, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Correspondence, RelativePose};
use crate::model::CameraModel;

pub(crate) struct Scene {
    pub k: CameraModel<f64>,
    pub pose: RelativePose<f64>,
    /// In camera 1 coordinates.
    pub points: Vec<Vector3<f64>>,
}

pub(crate) fn cross(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl Scene {
    /// Camera 2 orbits 30° about a vertical axis through the subject, 4 m in
    /// front of camera 1; points fill a person-sized box around the subject.
    pub fn standard(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subject = Vector3::new(0.0, 0.0, 4.0);
        let orbit = Rotation3::from_axis_angle(&Vector3::y_axis(), 30f64.to_radians());
        let c2 = subject + orbit * Vector3::new(0.0, 0.0, -4.0);
        let r = orbit.inverse().into_inner();
        let t = -(r * c2);
        let points = (0..n)
            .map(|_| {
                subject
                    + Vector3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.9..0.9),
                        rng.random_range(-0.3..0.3),
                    )
            })
            .collect();
        Self {
            k: CameraModel::new(1920.0, 1920.0, 960.0, 540.0, 1920.0, 1080.0).unwrap(),
            pose: RelativePose {
                rotation: r,
                translation: t,
            },
            points,
        }
    }

    pub fn project(&self, p: &Vector3<f64>) -> (Point2<f64>, Point2<f64>) {
        let q = self.pose.rotation * p + self.pose.translation;
        (self.k.project(p), self.k.project(&q))
    }

    pub fn correspondences(&self) -> Vec<Correspondence<f64>> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (u1, u2) = self.project(p);
                Correspondence {
                    frame_a: i,
                    frame_b: i,
                    joint: 0,
                    u1,
                    u2,
                    conf1: 1.0,
                    conf2: 1.0,
                }
            })
            .collect()
    }

    pub fn essential(&self) -> Matrix3<f64> {
        let e = cross(&self.pose.translation) * self.pose.rotation;
        e / e.norm()
    }

    /// Ground-truth F, `‖F‖_F = 1`.
    pub fn fundamental(&self) -> Matrix3<f64> {
        let kinv = self.k.inverse_matrix();
        let f = kinv.transpose() * self.essential() * kinv;
        f / f.norm()
    }
}
