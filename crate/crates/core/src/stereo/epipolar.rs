use nalgebra::{Matrix3, Point2, Vector2, Vector3};

use crate::Real;

/// Similarity that moves the centroid of `points` to the origin and scales
/// their mean distance from it to √2. `None` if all points coincide.
pub fn hartley_normalization<T: Real>(points: &[Point2<T>]) -> Option<Matrix3<T>> {
    if points.is_empty() {
        return None;
    }
    let n = T::count(points.len());
    let centroid = points.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords) / n;
    let mean_dist = points
        .iter()
        .fold(T::zero(), |acc, p| acc + (p.coords - centroid).norm())
        / n;
    if !(mean_dist > T::lit(1e-12)) {
        return None;
    }
    let s = T::lit(std::f64::consts::SQRT_2) / mean_dist;
    let (z, o) = (T::zero(), T::one());
    Some(Matrix3::new(s, z, -s * centroid.x, z, s, -s * centroid.y, z, z, o))
}

pub(crate) fn apply<T: Real>(t: &Matrix3<T>, p: &Point2<T>) -> Point2<T> {
    Point2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// First-order (Sampson) approximation of the squared geometric distance of
/// the pair `(x1, x2)` to the epipolar model `x2ᵀ F x1 = 0`.
pub fn sampson_error<T: Real>(f: &Matrix3<T>, x1: &Point2<T>, x2: &Point2<T>) -> T {
    let h1 = x1.to_homogeneous();
    let h2 = x2.to_homogeneous();
    let a = f * h1;
    let b = f.transpose() * h2;
    let num = h2.dot(&a);
    let den = a.x * a.x + a.y * a.y + b.x * b.x + b.y * b.y;
    if den > T::zero() {
        num * num / den
    } else {
        T::zero()
    }
}

/// Square root of [`sampson_error`], in the units of the coordinates.
pub fn sampson_distance<T: Real>(f: &Matrix3<T>, x1: &Point2<T>, x2: &Point2<T>) -> T {
    sampson_error(f, x1, x2).sqrt()
}

/// [`sampson_error`] and its gradients with respect to `x1` and `x2`.
pub(crate) fn sampson_with_gradient<T: Real>(
    f: &Matrix3<T>,
    x1: &Point2<T>,
    x2: &Point2<T>,
) -> (T, Vector2<T>, Vector2<T>) {
    let h1 = x1.to_homogeneous();
    let h2 = x2.to_homogeneous();
    let a = f * h1;
    let b = f.transpose() * h2;
    let num = h2.dot(&a);
    let den = a.x * a.x + a.y * a.y + b.x * b.x + b.y * b.y;
    if !(den > T::zero()) {
        return (T::zero(), Vector2::zeros(), Vector2::zeros());
    }
    let two = T::lit(2.0);
    let d = num * num / den;
    let ratio = num * num / (den * den);
    // d(den)/dx1 = 2 Fᵀ (a0, a1, 0), d(den)/dx2 = 2 F (b0, b1, 0)
    let g1 = b * (two * num / den) - f.transpose() * Vector3::new(a.x, a.y, T::zero()) * (two * ratio);
    let g2 = a * (two * num / den) - f * Vector3::new(b.x, b.y, T::zero()) * (two * ratio);
    (d, g1.xy(), g2.xy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_centers_and_scales() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 3.0),
            Point2::new(0.0, 3.0),
        ];
        let t = hartley_normalization(&pts).unwrap();
        let moved: Vec<_> = pts.iter().map(|p| apply(&t, p)).collect();
        let c = moved.iter().fold(Vector2::zeros(), |a, p| a + p.coords) / 4.0;
        assert_relative_eq!(c, Vector2::zeros(), epsilon = 1e-12);
        let md: f64 = moved.iter().map(|p| p.coords.norm()).sum::<f64>() / 4.0;
        assert_relative_eq!(md, 2f64.sqrt(), epsilon = 1e-12);
        assert!(hartley_normalization(&[Point2::new(1.0, 1.0); 5]).is_none());
    }

    #[test]
    fn sampson_of_horizontal_epipolar_lines() {
        // rectified pair: F = [e]x with e = (1, 0, 0), constraint y1 = y2
        let f = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let d = sampson_error(&f, &Point2::new(3.0, 2.0), &Point2::new(-5.0, 2.0));
        assert_eq!(d, 0.0);
        // offset 2 split over both images: 2² / 2
        let d = sampson_error(&f, &Point2::new(3.0, 0.0), &Point2::new(-5.0, 2.0));
        assert_relative_eq!(d, 2.0, epsilon = 1e-12);
        let d = sampson_distance(&f, &Point2::new(3.0, 0.0), &Point2::new(-5.0, 2.0));
        assert_relative_eq!(d, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = Matrix3::new(0.1, -0.4, 0.3, 0.7, 0.2, -0.5, -0.2, 0.6, 0.05);
        let x1 = Point2::new(0.3, -0.8);
        let x2 = Point2::new(-0.6, 0.4);
        let (d, g1, g2) = sampson_with_gradient(&f, &x1, &x2);
        assert_relative_eq!(d, sampson_error(&f, &x1, &x2), epsilon = 1e-15);
        let h = 1e-6;
        for k in 0..2 {
            let mut e = Vector2::zeros();
            e[k] = h;
            let n1 = (sampson_error(&f, &(x1 + e), &x2) - sampson_error(&f, &(x1 - e), &x2)) / (2.0 * h);
            let n2 = (sampson_error(&f, &x1, &(x2 + e)) - sampson_error(&f, &x1, &(x2 - e))) / (2.0 * h);
            assert_relative_eq!(g1[k], n1, max_relative = 1e-6);
            assert_relative_eq!(g2[k], n2, max_relative = 1e-6);
        }
    }
}
