use nalgebra::{Matrix3, Point2, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::epipolar::{apply, sampson_with_gradient};
use super::{FundamentalMatrix, RelativePose, StereoError};
use crate::model::CameraModel;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BundleConfig {
    pub lambda_rep: f64,
    pub lambda_epi: f64,
    /// Reprojection residual norm, in px, beyond which the loss grows linearly.
    pub huber_px: f64,
    pub learning_rate: f64,
    /// Cosine decay from `learning_rate` to `learning_rate * final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// Smallest absolute loss decrease that counts as an improvement.
    pub min_improvement: f64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            lambda_rep: 1.0,
            lambda_epi: 0.1,
            huber_px: 10.0,
            learning_rate: 1e-3,
            final_lr_fraction: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            iterations: 500,
            min_improvement: 1e-12,
        }
    }
}

/// One 3D point seen in both views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleObservation<T: Real> {
    pub point: usize,
    pub u1: Point2<T>,
    pub u2: Point2<T>,
    pub conf1: T,
    pub conf2: T,
}

/// Adam moments over the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub iteration: usize,
}

/// Structure and relative pose refined against fixed intrinsics.
///
/// The parameter vector is laid out as all point coordinates, then a
/// rotation increment `ω` (composed as `R ← exp([ω]×) R`), then `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleProblem<T: Real> {
    pub points: Vec<Vector3<T>>,
    pub observations: Vec<BundleObservation<T>>,
    pub pose: RelativePose<T>,
    k1: CameraModel<T>,
    k2: CameraModel<T>,
    f_normalized: Matrix3<T>,
    t1: Matrix3<T>,
    t2: Matrix3<T>,
    lambda_rep: T,
    lambda_epi: T,
    huber: T,
    pub adam: AdamState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleResult<T: Real> {
    /// Scaled so that `‖t‖ = 1`.
    pub points: Vec<Vector3<T>>,
    pub pose: RelativePose<T>,
    /// Loss before each step, then the loss after the last one.
    pub loss_trace: Vec<T>,
    pub initial_loss: T,
    pub final_loss: T,
    pub best_iteration: usize,
}

fn huber<T: Real>(r: &Vector2<T>, delta: T) -> (T, Vector2<T>) {
    let two = T::lit(2.0);
    let e = r.norm();
    if e <= delta {
        (e * e, r * two)
    } else {
        (two * delta * e - delta * delta, r * (two * delta / e))
    }
}

/// Projection and its Jacobian with respect to the camera-frame point.
fn project_with_jacobian<T: Real>(k: &CameraModel<T>, p: &Vector3<T>) -> (Point2<T>, [Vector3<T>; 2]) {
    let iz = T::one() / p.z;
    let u = Point2::new(k.fx * p.x * iz + k.cx, k.fy * p.y * iz + k.cy);
    let jx = Vector3::new(k.fx * iz, T::zero(), -k.fx * p.x * iz * iz);
    let jy = Vector3::new(T::zero(), k.fy * iz, -k.fy * p.y * iz * iz);
    (u, [jx, jy])
}

fn orthonormalize<T: Real>(r: &Matrix3<T>) -> Matrix3<T> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut out = u * v_t;
    if out.determinant() < T::zero() {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

impl<T: Real> BundleProblem<T> {
    pub fn new(
        points: Vec<Vector3<T>>,
        observations: Vec<BundleObservation<T>>,
        pose: RelativePose<T>,
        k1: CameraModel<T>,
        k2: CameraModel<T>,
        fundamental: &FundamentalMatrix<T>,
        config: &BundleConfig,
    ) -> Self {
        let n = points.len() * 3 + 6;
        Self {
            points,
            observations,
            pose,
            k1,
            k2,
            f_normalized: fundamental.normalized,
            t1: fundamental.t1,
            t2: fundamental.t2,
            lambda_rep: T::lit(config.lambda_rep),
            lambda_epi: T::lit(config.lambda_epi),
            huber: T::lit(config.huber_px),
            adam: AdamState {
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
                iteration: 0,
            },
        }
    }

    pub fn intrinsics(&self) -> (&CameraModel<T>, &CameraModel<T>) {
        (&self.k1, &self.k2)
    }

    pub fn parameter_count(&self) -> usize {
        self.points.len() * 3 + 6
    }

    pub fn loss(&self) -> T {
        self.evaluate(false).0
    }

    /// Objective and its gradient in the parameter layout.
    pub fn loss_and_gradient(&self) -> (T, Vec<T>) {
        self.evaluate(true)
    }

    fn evaluate(&self, with_gradient: bool) -> (T, Vec<T>) {
        let n = self.points.len();
        let mut grad = if with_gradient {
            vec![T::zero(); self.parameter_count()]
        } else {
            Vec::new()
        };
        let mut g_omega = Vector3::zeros();
        let mut g_t = Vector3::zeros();
        let mut loss = T::zero();
        let scale1 = self.t1[(0, 0)];
        let scale2 = self.t2[(0, 0)];
        let r = self.pose.rotation;
        for obs in &self.observations {
            let x = self.points[obs.point];
            let rx = r * x;
            let y = rx + self.pose.translation;
            let (p1, j1) = project_with_jacobian(&self.k1, &x);
            let (p2, j2) = project_with_jacobian(&self.k2, &y);
            let (rho1, d1) = huber(&(p1 - obs.u1), self.huber);
            let (rho2, d2) = huber(&(p2 - obs.u2), self.huber);
            let (samp, s1, s2) =
                sampson_with_gradient(&self.f_normalized, &apply(&self.t1, &p1), &apply(&self.t2, &p2));
            loss += self.lambda_rep * (obs.conf1 * rho1 + obs.conf2 * rho2) + self.lambda_epi * samp;
            if !with_gradient {
                continue;
            }
            let dp1 = d1 * (self.lambda_rep * obs.conf1) + s1 * (self.lambda_epi * scale1);
            let dp2 = d2 * (self.lambda_rep * obs.conf2) + s2 * (self.lambda_epi * scale2);
            let dx = j1[0] * dp1.x + j1[1] * dp1.y;
            let dy = j2[0] * dp2.x + j2[1] * dp2.y;
            let dx = dx + r.transpose() * dy;
            let base = obs.point * 3;
            for k in 0..3 {
                grad[base + k] += dx[k];
            }
            g_omega += rx.cross(&dy);
            g_t += dy;
        }
        if with_gradient {
            for k in 0..3 {
                grad[n * 3 + k] = g_omega[k];
                grad[n * 3 + 3 + k] = g_t[k];
            }
        }
        (loss, grad)
    }

    /// Applies a step in the parameter layout.
    pub fn retract(&mut self, delta: &[T]) {
        let n = self.points.len();
        for (i, p) in self.points.iter_mut().enumerate() {
            *p += Vector3::new(delta[3 * i], delta[3 * i + 1], delta[3 * i + 2]);
        }
        let omega = Vector3::new(delta[3 * n], delta[3 * n + 1], delta[3 * n + 2]);
        let exp = Rotation3::new(omega).into_inner();
        self.pose.rotation = orthonormalize(&(exp * self.pose.rotation));
        self.pose.translation += Vector3::new(delta[3 * n + 3], delta[3 * n + 4], delta[3 * n + 5]);
    }
}

/// Adam on the composite reprojection + Sampson objective, keeping the best
/// iterate. The returned loss is never above the initial one.
pub fn bundle_adjust<T: Real>(
    mut problem: BundleProblem<T>,
    config: &BundleConfig,
) -> Result<BundleResult<T>, StereoError> {
    let lr0 = config.learning_rate;
    let lr_min = lr0 * config.final_lr_fraction;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let eps = T::lit(config.epsilon);
    let min_improvement = T::lit(config.min_improvement);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut best: Option<(T, Vec<Vector3<T>>, RelativePose<T>, usize)> = None;
    let mut step = vec![T::zero(); problem.parameter_count()];

    for it in 0..=config.iterations {
        let last = it == config.iterations;
        let (loss, grad) = if last {
            (problem.loss(), Vec::new())
        } else {
            problem.loss_and_gradient()
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(StereoError::Divergence { iteration: it });
        }
        trace.push(loss);
        if best.as_ref().is_none_or(|(b, ..)| loss < *b - min_improvement) {
            best = Some((loss, problem.points.clone(), problem.pose, it));
        }
        if last {
            break;
        }
        let progress = it as f64 / config.iterations.max(1) as f64;
        let lr = T::lit(lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos()));
        let adam = &mut problem.adam;
        adam.iteration += 1;
        let c1 = T::one() - b1.powi(adam.iteration as i32);
        let c2 = T::one() - b2.powi(adam.iteration as i32);
        for (k, g) in grad.iter().enumerate() {
            adam.m[k] = b1 * adam.m[k] + (T::one() - b1) * *g;
            adam.v[k] = b2 * adam.v[k] + (T::one() - b2) * *g * *g;
            let m_hat = adam.m[k] / c1;
            let v_hat = adam.v[k] / c2;
            step[k] = -lr * m_hat / (v_hat.sqrt() + eps);
        }
        problem.retract(&step);
    }

    let (final_loss, mut points, mut pose, best_iteration) = best.expect("at least one evaluation");
    let norm = pose.translation.norm();
    if norm > T::zero() {
        for p in &mut points {
            *p /= norm;
        }
        pose.translation /= norm;
    }
    Ok(BundleResult {
        points,
        pose,
        initial_loss: trace[0],
        final_loss,
        loss_trace: trace,
        best_iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::Scene;
    use super::super::{estimate_fundamental, triangulate, RansacConfig};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn problem(scene: &Scene, noise: f64, seed: u64, config: &BundleConfig) -> BundleProblem<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let mut corr = scene.correspondences();
        if noise > 0.0 {
            for c in &mut corr {
                c.u1 += Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng));
                c.u2 += Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
        let f = estimate_fundamental(&corr, &RansacConfig::default()).unwrap();
        let mut points = Vec::new();
        let mut obs = Vec::new();
        for c in &corr {
            let j = triangulate(&c.u1, &c.u2, &scene.k, &scene.k, &scene.pose);
            assert!(j.valid);
            obs.push(BundleObservation {
                point: points.len(),
                u1: c.u1,
                u2: c.u2,
                conf1: c.conf1,
                conf2: c.conf2,
            });
            points.push(j.vector());
        }
        BundleProblem::new(points, obs, scene.pose, scene.k, scene.k, &f, config)
    }

    fn mean_reprojection(p: &[Vector3<f64>], pose: &RelativePose<f64>, pr: &BundleProblem<f64>) -> f64 {
        let (k1, k2) = pr.intrinsics();
        let total: f64 = pr
            .observations
            .iter()
            .map(|o| {
                let x = p[o.point];
                (k1.project(&x) - o.u1).norm() + (k2.project(&pose.transform(&x)) - o.u2).norm()
            })
            .sum();
        total / (2 * pr.observations.len()) as f64
    }

    fn rms_reprojection(p: &[Vector3<f64>], pose: &RelativePose<f64>, pr: &BundleProblem<f64>) -> f64 {
        let (k1, k2) = pr.intrinsics();
        let total: f64 = pr
            .observations
            .iter()
            .map(|o| {
                let x = p[o.point];
                (k1.project(&x) - o.u1).norm_squared() + (k2.project(&pose.transform(&x)) - o.u2).norm_squared()
            })
            .sum();
        (total / (2 * pr.observations.len()) as f64).sqrt()
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let config = BundleConfig {
            huber_px: 3.0,
            lambda_epi: 50.0,
            ..BundleConfig::default()
        };
        let scene = Scene::standard(12, 21);
        let mut pr = problem(&scene, 4.0, 5, &config);
        // move off the optimum so every term contributes
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for p in &mut pr.points {
            *p += Vector3::new(
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
            );
        }
        let (_, grad) = pr.loss_and_gradient();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..pr.parameter_count() {
            let mut delta = vec![0.0; pr.parameter_count()];
            delta[k] = h;
            let mut plus = pr.clone();
            plus.retract(&delta);
            delta[k] = -h;
            let mut minus = pr.clone();
            minus.retract(&delta);
            let numeric = (plus.loss() - minus.loss()) / (2.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let config = BundleConfig::default();
        let scene = Scene::standard(60, 22);
        let pr = problem(&scene, 0.0, 0, &config);
        let before = pr.clone();
        let res = bundle_adjust(pr, &config).unwrap();
        assert!(res.initial_loss - res.final_loss < 1e-12);
        let s = before.pose.translation.norm();
        for (a, b) in res.points.iter().zip(&before.points) {
            assert!((a * s - b).norm() < 1e-9);
        }
        assert!((res.pose.rotation - before.pose.rotation).norm() < 1e-9);
    }

    #[test]
    fn noisy_observations_are_refined() {
        let config = BundleConfig::default();
        let scene = Scene::standard(300, 23);
        let pr = problem(&scene, 1.0, 7, &config);
        let start = mean_reprojection(&pr.points, &pr.pose, &pr);
        let reference = pr.clone();
        let res = bundle_adjust(pr, &config).unwrap();
        assert!(res.final_loss <= res.initial_loss);
        let end = mean_reprojection(&res.points, &res.pose, &reference);
        assert!(end < start, "{end} !< {start}");
        assert!(end <= 1.2, "mean reprojection {end}");
        // four measurements per point against three unknowns leaves one
        // residual degree of freedom per point: E[Σ r²] ≈ σ² N over 2N
        // image residuals, so the per-residual RMS is about σ/√2
        let rms = rms_reprojection(&res.points, &res.pose, &reference);
        assert!((rms - 0.5f64.sqrt()).abs() < 0.2 * 0.5f64.sqrt(), "rms {rms}");
        let r = res.pose.rotation;
        assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9);
        assert!((res.pose.translation.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_start_diverges() {
        let config = BundleConfig::default();
        let scene = Scene::standard(20, 24);
        let mut pr = problem(&scene, 0.0, 0, &config);
        pr.points[3].z = 0.0;
        assert_eq!(
            bundle_adjust(pr, &config).unwrap_err(),
            StereoError::Divergence { iteration: 0 }
        );
    }
}
