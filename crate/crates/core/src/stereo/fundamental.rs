use nalgebra::{DMatrix, Matrix3, Point2, SVD};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::epipolar::{apply, hartley_normalization, sampson_distance};
use super::{Correspondence, StereoError};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Inlier threshold on the Sampson distance in Hartley-normalized units.
    pub tau: f64,
    pub max_iterations: usize,
    /// Probability of drawing at least one all-inlier sample, for early exit.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            tau: 0.005,
            max_iterations: 2000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

/// Rank-2 fundamental matrix with its RANSAC consensus set.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix<T: Real> {
    /// Pixel-coordinate matrix, `‖F‖_F = 1`.
    pub matrix: Matrix3<T>,
    /// Hartley normalizations of view 1 and view 2 points.
    pub t1: Matrix3<T>,
    pub t2: Matrix3<T>,
    /// The same model in normalized coordinates, `‖F̂‖_F = 1`.
    pub normalized: Matrix3<T>,
    pub inliers: Vec<bool>,
    pub tau: T,
}

impl<T: Real> FundamentalMatrix<T> {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }

    /// Sampson distance of a pixel pair in normalized units.
    pub fn sampson(&self, u1: &Point2<T>, u2: &Point2<T>) -> T {
        sampson_distance(&self.normalized, &apply(&self.t1, u1), &apply(&self.t2, u2))
    }
}

/// Linear fit of `x2ᵀ F x1 = 0` on points that are already normalized, with
/// rank 2 enforced. `None` for fewer than 8 pairs or a degenerate system.
fn fit_linear<T: Real>(x1: &[Point2<T>], x2: &[Point2<T>]) -> Option<Matrix3<T>> {
    let n = x1.len();
    if n < 8 {
        return None;
    }
    let rows = n.max(9);
    let mut a = DMatrix::<T>::zeros(rows, 9);
    for (i, (p, q)) in x1.iter().zip(x2).enumerate() {
        let (u, v, up, vp) = (p.x, p.y, q.x, q.y);
        let row = [up * u, up * v, up, vp * u, vp * v, vp, u, v, T::one()];
        for (j, val) in row.into_iter().enumerate() {
            a[(i, j)] = val;
        }
    }
    let svd = SVD::new(a, false, true);
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .expect("finite")
    });
    let s = &svd.singular_values;
    if !(s[order[7]] > T::lit(1e-10) * s[order[0]]) {
        return None;
    }
    let f = v_t.row(order[8]);
    let f = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    enforce_rank2(&f)
}

fn enforce_rank2<T: Real>(f: &Matrix3<T>) -> Option<Matrix3<T>> {
    let svd = f.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut s = svd.singular_values;
    let smallest = s.imin();
    s[smallest] = T::zero();
    let f = u * Matrix3::from_diagonal(&s) * v_t;
    let norm = f.norm();
    (norm > T::zero()).then(|| f / norm)
}

/// Normalized 8-point algorithm on pixel points; rank-2, `‖F‖_F = 1`.
pub fn eight_point<T: Real>(x1: &[Point2<T>], x2: &[Point2<T>]) -> Option<Matrix3<T>> {
    let t1 = hartley_normalization(x1)?;
    let t2 = hartley_normalization(x2)?;
    let n1: Vec<_> = x1.iter().map(|p| apply(&t1, p)).collect();
    let n2: Vec<_> = x2.iter().map(|p| apply(&t2, p)).collect();
    let f = fit_linear(&n1, &n2)?;
    let f = t2.transpose() * f * t1;
    Some(f / f.norm())
}

fn consensus<T: Real>(f: &Matrix3<T>, n1: &[Point2<T>], n2: &[Point2<T>], tau: T) -> Vec<bool> {
    n1.iter()
        .zip(n2)
        .map(|(p, q)| sampson_distance(f, p, q) < tau)
        .collect()
}

/// RANSAC over minimal 8-point samples in Hartley-normalized coordinates,
/// followed by refits on the consensus set.
pub fn estimate_fundamental<T: Real>(
    correspondences: &[Correspondence<T>],
    config: &RansacConfig,
) -> Result<FundamentalMatrix<T>, StereoError> {
    let n = correspondences.len();
    if n < 8 {
        return Err(StereoError::InsufficientCorrespondences(n));
    }
    let degenerate = |what: &str| StereoError::DegenerateGeometry(what.to_owned());
    let p1: Vec<_> = correspondences.iter().map(|c| c.u1).collect();
    let p2: Vec<_> = correspondences.iter().map(|c| c.u2).collect();
    let t1 = hartley_normalization(&p1).ok_or_else(|| degenerate("view 1 points coincide"))?;
    let t2 = hartley_normalization(&p2).ok_or_else(|| degenerate("view 2 points coincide"))?;
    let n1: Vec<_> = p1.iter().map(|p| apply(&t1, p)).collect();
    let n2: Vec<_> = p2.iter().map(|p| apply(&t2, p)).collect();
    let tau = T::lit(config.tau);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(usize, Matrix3<T>)> = None;
    let mut needed = config.max_iterations;
    let mut iteration = 0;
    while iteration < needed.min(config.max_iterations) {
        iteration += 1;
        let idx = sample(&mut rng, n, 8);
        let s1: Vec<_> = idx.iter().map(|i| n1[i]).collect();
        let s2: Vec<_> = idx.iter().map(|i| n2[i]).collect();
        let Some(f) = fit_linear(&s1, &s2) else {
            continue;
        };
        let count = consensus(&f, &n1, &n2, tau).iter().filter(|&&b| b).count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, f));
            let w = count as f64 / n as f64;
            let miss = 1.0 - w.powi(8);
            needed = if miss <= f64::EPSILON {
                iteration
            } else {
                ((1.0 - config.confidence).ln() / miss.ln()).ceil() as usize
            };
        }
    }
    let (count, mut f) = best.ok_or_else(|| degenerate("no non-degenerate minimal sample"))?;
    if count < 8 {
        return Err(degenerate("fewer than 8 inliers"));
    }

    let mut mask = consensus(&f, &n1, &n2, tau);
    for _ in 0..3 {
        let s1: Vec<_> = n1.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
        let s2: Vec<_> = n2.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
        let Some(refit) = fit_linear(&s1, &s2) else {
            break;
        };
        let refit_mask = consensus(&refit, &n1, &n2, tau);
        let old = mask.iter().filter(|&&b| b).count();
        let new = refit_mask.iter().filter(|&&b| b).count();
        if new < 8 || new < old {
            break;
        }
        let changed = refit_mask != mask;
        f = refit;
        mask = refit_mask;
        if !changed {
            break;
        }
    }
    if mask.iter().filter(|&&b| b).count() < 8 {
        return Err(degenerate("fewer than 8 inliers"));
    }

    let pixel = t2.transpose() * f * t1;
    Ok(FundamentalMatrix {
        matrix: pixel / pixel.norm(),
        t1,
        t2,
        normalized: f / f.norm(),
        inliers: mask,
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::Scene;
    use super::*;
    use rand::Rng;

    fn algebraic_residual(f: &Matrix3<f64>, u1: &Point2<f64>, u2: &Point2<f64>) -> f64 {
        u2.to_homogeneous().dot(&(f * u1.to_homogeneous()))
    }

    #[test]
    fn exact_correspondences_are_all_inliers() {
        let scene = Scene::standard(200, 1);
        let corr = scene.correspondences();
        let f = estimate_fundamental(&corr, &RansacConfig::default()).unwrap();
        assert_eq!(f.inlier_count(), corr.len());
        let s = f.matrix.svd(false, false).singular_values;
        assert!(s.min() / s.max() < 1e-12);
        assert!((f.matrix.norm() - 1.0).abs() < 1e-12);
        for c in &corr {
            let r = algebraic_residual(&f.normalized, &apply(&f.t1, &c.u1), &apply(&f.t2, &c.u2));
            assert!(r.abs() < 1e-9, "residual {r}");
            assert!(f.sampson(&c.u1, &c.u2) < f.tau);
        }
    }

    #[test]
    fn planted_outliers_are_rejected() {
        let scene = Scene::standard(700, 2);
        let mut corr = scene.correspondences();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n_out = corr.len() * 3 / 10;
        let mut truth = vec![true; corr.len()];
        for (k, c) in corr.iter_mut().enumerate().take(n_out) {
            c.u2 = Point2::new(rng.random_range(0.0..1920.0), rng.random_range(0.0..1080.0));
            truth[k] = false;
        }
        let f = estimate_fundamental(&corr, &RansacConfig::default()).unwrap();
        let kept_true = (0..corr.len()).filter(|&i| truth[i] && f.inliers[i]).count();
        let kept_false = (0..corr.len()).filter(|&i| !truth[i] && f.inliers[i]).count();
        let true_count = truth.iter().filter(|&&t| t).count();
        assert!(kept_true as f64 >= 0.99 * true_count as f64, "{kept_true}/{true_count}");
        assert!(
            kept_false as f64 <= 0.01 * f.inlier_count() as f64,
            "{kept_false} false of {}",
            f.inlier_count()
        );
    }

    #[test]
    fn identical_points_are_degenerate() {
        let scene = Scene::standard(20, 3);
        let mut corr = scene.correspondences();
        for c in &mut corr {
            c.u1 = Point2::new(10.0, 10.0);
            c.u2 = Point2::new(20.0, 30.0);
        }
        assert!(matches!(
            estimate_fundamental(&corr, &RansacConfig::default()),
            Err(StereoError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn eight_point_matches_ransac_on_clean_data() {
        let scene = Scene::standard(50, 4);
        let corr = scene.correspondences();
        let p1: Vec<_> = corr.iter().map(|c| c.u1).collect();
        let p2: Vec<_> = corr.iter().map(|c| c.u2).collect();
        let f = eight_point(&p1, &p2).unwrap();
        let truth = scene.fundamental();
        let sign = if (f.transpose() * truth).trace() < 0.0 {
            -1.0
        } else {
            1.0
        };
        assert!((f * sign - truth).norm() < 1e-8, "{f} vs {truth}");
    }

    #[test]
    fn sampson_is_scale_free_in_single_precision() {
        let scene = Scene::standard(40, 5);
        let corr: Vec<Correspondence<f32>> = scene
            .correspondences()
            .iter()
            .map(|c| Correspondence {
                frame_a: c.frame_a,
                frame_b: c.frame_b,
                joint: c.joint,
                u1: c.u1.cast(),
                u2: c.u2.cast(),
                conf1: 1.0,
                conf2: 1.0,
            })
            .collect();
        let f = estimate_fundamental(&corr, &RansacConfig::default()).unwrap();
        assert_eq!(f.inlier_count(), corr.len());
    }
}
