use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::Real;

/// Noise model of the constant-velocity filter, in px² and (px/frame)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanParams {
    pub process_pos: f64,
    pub process_vel: f64,
    pub measurement: f64,
    pub initial_pos: f64,
    pub initial_vel: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_pos: 1.0,
            process_vel: 4.0,
            measurement: 25.0,
            initial_pos: 100.0,
            initial_vel: 400.0,
        }
    }
}

/// Constant-velocity filter over the image-plane target center.
///
/// State is `(x, y, vx, vy)`; only the position is measured.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanFilter<T: Real> {
    mean: Vector4<T>,
    covariance: Matrix4<T>,
    /// Measurements absorbed since initialization.
    warmup_count: usize,
    q: Matrix4<T>,
    r: Matrix2<T>,
}

impl<T: Real> KalmanFilter<T> {
    /// Starts at `center` with zero velocity.
    pub fn new(center: Vector2<T>, params: &KalmanParams) -> Self {
        let diag = |a: f64, b: f64| Matrix4::from_diagonal(&Vector4::new(T::lit(a), T::lit(a), T::lit(b), T::lit(b)));
        Self {
            mean: Vector4::new(center.x, center.y, T::zero(), T::zero()),
            covariance: diag(params.initial_pos, params.initial_vel),
            warmup_count: 1,
            q: diag(params.process_pos, params.process_vel),
            r: Matrix2::from_diagonal_element(T::lit(params.measurement)),
        }
    }

    /// Builds a filter from consecutive centers, oldest first.
    pub fn warmed_up(centers: &[Vector2<T>], params: &KalmanParams) -> Option<Self> {
        let (first, rest) = centers.split_first()?;
        let mut kf = Self::new(*first, params);
        for c in rest {
            kf.predict();
            kf.update(*c);
        }
        Some(kf)
    }

    fn transition() -> Matrix4<T> {
        let mut a = Matrix4::identity();
        a[(0, 2)] = T::one();
        a[(1, 3)] = T::one();
        a
    }

    fn observation() -> Matrix2x4<T> {
        let mut h = Matrix2x4::zeros();
        h[(0, 0)] = T::one();
        h[(1, 1)] = T::one();
        h
    }

    /// Advances one frame and returns the predicted center.
    pub fn predict(&mut self) -> Vector2<T> {
        let a = Self::transition();
        self.mean = a * self.mean;
        self.covariance = a * self.covariance * a.transpose() + self.q;
        self.center()
    }

    /// Absorbs a measured center (Joseph-form covariance update).
    pub fn update(&mut self, measurement: Vector2<T>) {
        let h = Self::observation();
        let p = self.covariance;
        let s = h * p * h.transpose() + self.r;
        let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
        let k = p * h.transpose() * s_inv;
        let innovation = measurement - h * self.mean;
        self.mean += k * innovation;
        let i_kh = Matrix4::identity() - k * h;
        let p = i_kh * p * i_kh.transpose() + k * self.r * k.transpose();
        self.covariance = (p + p.transpose()) * T::lit(0.5);
        self.warmup_count += 1;
    }

    pub fn center(&self) -> Vector2<T> {
        Vector2::new(self.mean.x, self.mean.y)
    }

    pub fn mean(&self) -> &Vector4<T> {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix4<T> {
        &self.covariance
    }

    pub fn warmup_count(&self) -> usize {
        self.warmup_count
    }
}
