use super::RasterImage;

/// Gray-world white balance: every channel is scaled by the ratio of the
/// global mean to its own mean. Zero-mean channels are left untouched.
pub fn gray_world(image: &RasterImage) -> RasterImage {
    let mut out = image.clone();
    if image.is_empty() {
        return out;
    }
    let mut sums = [0u64; 3];
    for px in image.data().chunks_exact(3) {
        for c in 0..3 {
            sums[c] += px[c] as u64;
        }
    }
    let n = (image.width() * image.height()) as f64;
    let means = sums.map(|s| s as f64 / n);
    let global = means.iter().sum::<f64>() / 3.0;
    let scales = means.map(|m| if m > 0.0 { global / m } else { 1.0 });
    for px in out.data_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = (px[c] as f64 * scales[c]).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_images_are_fixed_points() {
        let gray = RasterImage::filled(4, 3, [90, 90, 90]);
        assert_eq!(gray_world(&gray), gray);
        let img = RasterImage::new(2, 1, vec![10, 20, 30, 30, 20, 10]).unwrap();
        assert_eq!(gray_world(&img), img);
    }

    #[test]
    fn constant_color_becomes_gray() {
        let img = RasterImage::filled(3, 3, [100, 200, 60]);
        assert_eq!(gray_world(&img), RasterImage::filled(3, 3, [120, 120, 120]));
    }

    #[test]
    fn zero_channel_left_alone() {
        let img = RasterImage::filled(2, 2, [0, 100, 50]);
        let out = gray_world(&img);
        assert_eq!(out.pixel(0, 0)[0], 0);
        assert_eq!(out.pixel(1, 1), [0, 50, 50]);
    }

    proptest! {
        #[test]
        fn idempotent_within_one(data in prop::collection::vec(60u8..=150, 3 * 16)) {
            let img = RasterImage::new(4, 4, data).unwrap();
            // clamping discards information, so the invariant is stated for unsaturated outputs
            let mut means = [0.0f64; 3];
            for px in img.data().chunks_exact(3) {
                for c in 0..3 {
                    means[c] += px[c] as f64 / 16.0;
                }
            }
            let global = means.iter().sum::<f64>() / 3.0;
            let saturates = img.data().chunks_exact(3).any(|px| {
                (0..3).any(|c| means[c] > 0.0 && px[c] as f64 * global / means[c] > 254.5)
            });
            prop_assume!(!saturates && means.iter().all(|&m| m >= 1.0));
            let once = gray_world(&img);
            let twice = gray_world(&once);
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((*a as i32 - *b as i32).abs() <= 1);
            }
        }
    }
}
