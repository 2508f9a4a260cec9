use serde::{Deserialize, Serialize};

use super::{luma, RasterImage};

/// Tile grid and clip limit for [`clahe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Histogram bins are clipped at `clip_limit × (tile pixels / 256)`.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 2.0,
        }
    }
}

/// Contrast-limited adaptive histogram equalization of the luma channel.
///
/// Luma is equalized per tile and blended bilinearly between tile centers.
/// Each RGB channel is then shifted by the luma change, which keeps the
/// chroma differences `R - Y`, `G - Y`, `B - Y` intact up to clamping.
pub fn clahe(image: &RasterImage, params: ClaheParams) -> RasterImage {
    assert!(
        params.tiles_x >= 1 && params.tiles_y >= 1,
        "tile grid must be at least 1x1"
    );
    assert!(params.clip_limit > 0.0, "clip limit must be positive");
    let (w, h) = (image.width(), image.height());
    if image.is_empty() {
        return image.clone();
    }
    let lum: Vec<u8> = image.data().chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect();
    let gx = params.tiles_x.min(w);
    let gy = params.tiles_y.min(h);
    let xs: Vec<usize> = (0..=gx).map(|i| i * w / gx).collect();
    let ys: Vec<usize> = (0..=gy).map(|j| j * h / gy).collect();

    let mut luts = vec![[0u8; 256]; gx * gy];
    for ty in 0..gy {
        for tx in 0..gx {
            let mut hist = [0u32; 256];
            for y in ys[ty]..ys[ty + 1] {
                for x in xs[tx]..xs[tx + 1] {
                    hist[lum[y * w + x] as usize] += 1;
                }
            }
            let n = ((xs[tx + 1] - xs[tx]) * (ys[ty + 1] - ys[ty])) as u32;
            luts[ty * gx + tx] = if hist.iter().filter(|&&c| c > 0).count() <= 1 {
                // a single occupied bin has nothing to stretch
                identity_lut()
            } else {
                clip_histogram(&mut hist, params.clip_limit, n);
                equalization_lut(&hist)
            };
        }
    }

    let centers =
        |bounds: &[usize]| -> Vec<f64> { bounds.windows(2).map(|b| (b[0] + b[1]) as f64 / 2.0 - 0.5).collect() };
    let cxs = centers(&xs);
    let cys = centers(&ys);
    let col_weights: Vec<(usize, usize, f64)> = (0..w).map(|x| blend_position(&cxs, x as f64)).collect();

    let mut out = image.clone();
    let data = out.data_mut();
    for y in 0..h {
        let (j0, j1, wy) = blend_position(&cys, y as f64);
        for (x, &(i0, i1, wx)) in col_weights.iter().enumerate() {
            let v = lum[y * w + x] as usize;
            let at = |i: usize, j: usize| luts[j * gx + i][v] as f64;
            let top = at(i0, j0) * (1.0 - wx) + at(i1, j0) * wx;
            let bottom = at(i0, j1) * (1.0 - wx) + at(i1, j1) * wx;
            let new_luma = (top * (1.0 - wy) + bottom * wy).round() as i32;
            let delta = new_luma - v as i32;
            let px = &mut data[(y * w + x) * 3..(y * w + x) * 3 + 3];
            for s in px.iter_mut() {
                *s = (*s as i32 + delta).clamp(0, 255) as u8;
            }
        }
    }
    out
}

fn clip_histogram(hist: &mut [u32; 256], clip_limit: f64, n: u32) {
    let limit = ((clip_limit * n as f64 / 256.0).floor() as u32).max(1);
    let mut excess = 0u32;
    for b in hist.iter_mut() {
        if *b > limit {
            excess += *b - limit;
            *b = limit;
        }
    }
    if excess == 0 {
        return;
    }
    let per_bin = excess / 256;
    for b in hist.iter_mut() {
        *b += per_bin;
    }
    let residual = (excess % 256) as usize;
    if residual > 0 {
        let step = (256 / residual).max(1);
        for b in hist.iter_mut().step_by(step).take(residual) {
            *b += 1;
        }
    }
}

/// Classic histogram-equalization mapping `(cdf(v) - cdf_min) / (n - cdf_min)`.
fn equalization_lut(hist: &[u32; 256]) -> [u8; 256] {
    let n: u64 = hist.iter().map(|&c| c as u64).sum();
    let cdf_min = hist.iter().copied().find(|&c| c > 0).unwrap_or(0) as u64;
    if n == cdf_min {
        return identity_lut();
    }
    let mut lut = [0u8; 256];
    let mut cdf = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        cdf += c as u64;
        let num = cdf.saturating_sub(cdf_min) * 255;
        let den = n - cdf_min;
        lut[v] = ((num + den / 2) / den).min(255) as u8;
    }
    lut
}

fn identity_lut() -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (v, l) in lut.iter_mut().enumerate() {
        *l = v as u8;
    }
    lut
}

/// Neighbouring tile centers around `p` and the weight of the upper one.
fn blend_position(centers: &[f64], p: f64) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers
        .windows(2)
        .position(|c| p >= c[0] && p < c[1])
        .unwrap_or(last - 1);
    let span = centers[i + 1] - centers[i];
    (i, i + 1, (p - centers[i]) / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_stays_constant() {
        let img = RasterImage::filled(16, 12, [80, 120, 40]);
        assert_eq!(clahe(&img, ClaheParams::default()), img);
        let img = RasterImage::filled(64, 64, [200, 200, 200]);
        assert_eq!(clahe(&img, ClaheParams::default()), img);
    }

    #[test]
    fn single_level_tile_is_identity() {
        let img = RasterImage::filled(10, 10, [77, 77, 77]);
        let params = ClaheParams {
            tiles_x: 1,
            tiles_y: 1,
            clip_limit: 1e6,
        };
        assert_eq!(clahe(&img, params), img);
    }

    #[test]
    fn two_levels_stretch_to_range_ends() {
        let mut img = RasterImage::filled(8, 8, [50, 50, 50]);
        for y in 0..8 {
            for x in 4..8 {
                img.set_pixel(x, y, [200, 200, 200]);
            }
        }
        let params = ClaheParams {
            tiles_x: 1,
            tiles_y: 1,
            clip_limit: 1e6,
        };
        let out = clahe(&img, params);
        assert_eq!(out.pixel(0, 0), [0, 0, 0]);
        assert_eq!(out.pixel(7, 7), [255, 255, 255]);
    }

    #[test]
    fn chroma_offsets_survive_equalization() {
        let mut img = RasterImage::filled(9, 9, [60, 50, 40]);
        for y in 0..9 {
            for x in 3..9 {
                let rgb = if x < 6 { [110, 100, 90] } else { [160, 150, 140] };
                img.set_pixel(x, y, rgb);
            }
        }
        let params = ClaheParams {
            tiles_x: 1,
            tiles_y: 1,
            clip_limit: 1e6,
        };
        let out = clahe(&img, params);
        let [r, g, b] = out.pixel(4, 4);
        assert!(g > 100 && g < 200, "middle level stays unsaturated: {g}");
        assert_eq!((r as i32 - g as i32, g as i32 - b as i32), (10, 10));
    }

    #[test]
    fn clipping_redistributes_all_excess() {
        let mut hist = [0u32; 256];
        hist[10] = 1000;
        clip_histogram(&mut hist, 2.0, 1000);
        assert_eq!(hist.iter().sum::<u32>(), 1000);
        assert!(hist[10] <= 7 + 4 + 1);
    }

    proptest! {
        #[test]
        fn output_stays_in_range_and_shape(w in 1usize..20, h in 1usize..20, tiles in 1usize..5, clip in 0.5f64..8.0, seed in any::<u64>()) {
            let data: Vec<u8> = (0..w * h * 3).map(|i| (seed.rotate_left(i as u32 % 64) ^ i as u64) as u8).collect();
            let img = RasterImage::new(w, h, data).unwrap();
            let out = clahe(&img, ClaheParams { tiles_x: tiles, tiles_y: tiles, clip_limit: clip });
            prop_assert_eq!((out.width(), out.height(), out.data().len()), (w, h, w * h * 3));
        }
    }
}
