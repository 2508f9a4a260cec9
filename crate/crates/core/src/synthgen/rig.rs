use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::model::CameraModel;

/// A calibrated pinhole camera placed in the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigCamera {
    pub intrinsics: CameraModel<f64>,
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// Camera center in world coordinates.
    pub center: [f64; 3],
}

impl RigCamera {
    /// Camera at `center` looking at `target`, image rows pointing world-down.
    pub fn looking_at(
        intrinsics: CameraModel<f64>,
        center: Vector3<f64>,
        target: Vector3<f64>,
    ) -> Result<Self, SynthError> {
        let z = target - center;
        let down = Vector3::new(0.0, 1.0, 0.0);
        let x = down.cross(&z);
        if !(z.norm() > 1e-9 && x.norm() > 1e-9 * z.norm()) {
            return Err(SynthError::InvalidRig(
                "camera must look at a distinct, non-vertical target".into(),
            ));
        }
        let z = z.normalize();
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Self {
            intrinsics,
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
            center: center.into(),
        })
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn center_vector(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * (p - self.center_vector())
    }

    /// Pixel position of a world point, `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Point2<f64>> {
        let c = self.to_camera(p);
        (c.z > 1e-9).then(|| self.intrinsics.project(&c))
    }

    pub fn in_image(&self, u: &Point2<f64>) -> bool {
        (0.0..=self.intrinsics.width).contains(&u.x) && (0.0..=self.intrinsics.height).contains(&u.y)
    }
}

/// Pose of camera `b` relative to camera `a`: `X_b = R X_a + t`.
pub fn relative_pose(a: &RigCamera, b: &RigCamera) -> (Matrix3<f64>, Vector3<f64>) {
    let r = b.rotation_matrix() * a.rotation_matrix().transpose();
    let t = b.rotation_matrix() * (a.center_vector() - b.center_vector());
    (r, t)
}

/// Fundamental matrix with `x_bᵀ F x_a = 0` for pixel coordinates.
pub fn true_fundamental(a: &RigCamera, b: &RigCamera) -> Matrix3<f64> {
    let (r, t) = relative_pose(a, b);
    let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
    b.intrinsics.inverse_matrix().transpose() * tx * r * a.intrinsics.inverse_matrix()
}
