use super::RasterImage;
use crate::model::BBox;

pub const DEFAULT_BLUR_SIGMA: f64 = 6.0;

/// Normalized 1-D Gaussian kernel of radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Gaussian-blurs the pixels inside each box, clipped to the image.
///
/// Pixels outside every box are copied unchanged. The blur samples the
/// original image with edge replication, so overlapping boxes do not blur
/// twice.
pub fn blur_boxes(image: &RasterImage, boxes: &[BBox], sigma: f64) -> RasterImage {
    assert!(sigma > 0.0, "sigma must be positive");
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    if boxes.is_empty() || image.is_empty() {
        return out;
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;

    let mut mask = vec![false; w * h];
    let mut any = false;
    for b in boxes {
        let x0 = b.x0.floor().max(0.0) as usize;
        let y0 = b.y0.floor().max(0.0) as usize;
        let x1 = (b.x1.ceil().max(0.0) as usize).min(w);
        let y1 = (b.y1.ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                mask[y * w + x] = true;
                any = true;
            }
        }
    }
    if !any {
        return out;
    }

    let src = image.data();
    let clamp_x = |x: i64| x.clamp(0, w as i64 - 1) as usize;
    let clamp_y = |y: i64| y.clamp(0, h as i64 - 1) as usize;
    // horizontal pass for every row a masked pixel can reach vertically
    let mut needed_rows = vec![false; h];
    for y in 0..h {
        if mask[y * w..(y + 1) * w].iter().any(|&m| m) {
            for dy in -radius..=radius {
                needed_rows[clamp_y(y as i64 + dy)] = true;
            }
        }
    }
    let mut horiz = vec![0.0f64; w * h * 3];
    for y in (0..h).filter(|&y| needed_rows[y]) {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (k, &wt) in kernel.iter().enumerate() {
                let sx = clamp_x(x as i64 + k as i64 - radius);
                let i = (y * w + sx) * 3;
                for c in 0..3 {
                    acc[c] += wt * src[i + c] as f64;
                }
            }
            horiz[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            let mut acc = [0.0; 3];
            for (k, &wt) in kernel.iter().enumerate() {
                let sy = clamp_y(y as i64 + k as i64 - radius);
                let i = (sy * w + x) * 3;
                for c in 0..3 {
                    acc[c] += wt * horiz[i + c];
                }
            }
            for c in 0..3 {
                data[(y * w + x) * 3 + c] = acc[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_boxes_is_identity() {
        let img = RasterImage::new(3, 2, (0..18).collect()).unwrap();
        assert_eq!(blur_boxes(&img, &[], 2.0), img);
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = RasterImage::filled(9, 7, [12, 34, 56]);
        let out = blur_boxes(&img, &[BBox::new(0.0, 0.0, 9.0, 7.0)], 1.5);
        assert_eq!(out, img);
    }

    #[test]
    fn impulse_center_matches_kernel_weight() {
        // independent 2-D kernel: exp(-(x^2 + y^2) / 2) normalized over the 7x7 support
        let mut total = 0.0;
        for y in -3i32..=3 {
            for x in -3i32..=3 {
                total += (-((x * x + y * y) as f64) / 2.0).exp();
            }
        }
        let expected = (255.0 / total).round() as u8;
        assert_eq!(expected, 41);

        let mut img = RasterImage::filled(15, 15, [0, 0, 0]);
        img.set_pixel(7, 7, [255, 255, 255]);
        let out = blur_boxes(&img, &[BBox::new(4.0, 4.0, 11.0, 11.0)], 1.0);
        assert_eq!(out.pixel(7, 7), [expected; 3]);
    }

    proptest! {
        #[test]
        fn untouched_outside_boxes(x0 in 0.0f64..12.0, y0 in 0.0f64..12.0, bw in 0.0f64..8.0, bh in 0.0f64..8.0, seed in any::<u64>()) {
            let data: Vec<u8> = (0..16 * 16 * 3).map(|i| (seed.rotate_left(i as u32 % 64) ^ (i as u64 * 7)) as u8).collect();
            let img = RasterImage::new(16, 16, data).unwrap();
            let b = BBox::new(x0, y0, x0 + bw, y0 + bh);
            let out = blur_boxes(&img, &[b], 2.0);
            for y in 0..16 {
                for x in 0..16 {
                    let inside = (x as f64) >= b.x0.floor() && (x as f64) < b.x1.ceil()
                        && (y as f64) >= b.y0.floor() && (y as f64) < b.y1.ceil();
                    if !inside {
                        prop_assert_eq!(out.pixel(x, y), img.pixel(x, y));
                    }
                }
            }
        }
    }
}
