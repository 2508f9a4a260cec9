use serde::{Deserialize, Serialize};

use super::{Observation, SyncError};

/// Inclusive frame-index interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpan {
    pub first: usize,
    pub last: usize,
}

impl FrameSpan {
    pub fn contains(&self, frame: usize) -> bool {
        (self.first..=self.last).contains(&frame)
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Agent clock readings compared against the nominal frame timeline.
///
/// The expected timestamp of frame `i` is `offset_ms + i * 1000 / fps`, where
/// the offset is the median of the observed offsets. Observations whose
/// residual is an isolated excursion, or whose clock increment is physically
/// implausible, are flagged as misreads and ignored everywhere else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub nominal_fps: f64,
    pub tol_ms: f64,
    pub offset_ms: f64,
    /// Sorted by frame index, one per frame.
    pub observations: Vec<Observation>,
    /// `observed - expected` per observation, in ms.
    pub residuals: Vec<f64>,
    pub outlier: Vec<bool>,
    /// Indices into `observations`: maximal runs of inliers whose consecutive
    /// residuals agree within `tol_ms`.
    pub segments: Vec<(usize, usize)>,
    /// Longest run of inliers within `tol_ms` of the median residual.
    pub stable_region: FrameSpan,
}

impl DriftModel {
    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.nominal_fps
    }

    pub fn inliers(&self) -> impl Iterator<Item = &Observation> + '_ {
        self.observations
            .iter()
            .zip(&self.outlier)
            .filter(|(_, o)| !**o)
            .map(|(o, _)| o)
    }

    pub fn outliers(&self) -> impl Iterator<Item = &Observation> + '_ {
        self.observations
            .iter()
            .zip(&self.outlier)
            .filter(|(_, o)| **o)
            .map(|(o, _)| o)
    }

    /// Whether every inlier lies in a single consistent segment.
    pub fn is_stable_everywhere(&self) -> bool {
        self.segments.len() <= 1
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Fits the nominal timeline to clock observations.
pub fn fit_drift(observations: &[Observation], nominal_fps: f64, tol_ms: f64) -> Result<DriftModel, SyncError> {
    if !(nominal_fps > 0.0) {
        return Err(SyncError::Input(format!(
            "nominal fps must be positive, got {nominal_fps}"
        )));
    }
    let mut obs = observations.to_vec();
    obs.sort_by_key(|o| o.frame_index);
    obs.dedup_by_key(|o| o.frame_index);
    if obs.len() < 2 {
        return Err(SyncError::InsufficientData(obs.len()));
    }
    let period = 1000.0 / nominal_fps;
    let offsets: Vec<f64> = obs
        .iter()
        .map(|o| o.timestamp_ms as f64 - o.frame_index as f64 * period)
        .collect();

    let mut t0 = median(&mut offsets.clone());
    let first_pass: Vec<f64> = offsets.iter().map(|o| o - t0).collect();
    let outlier = flag_misreads(&obs, &first_pass, period, tol_ms);
    let mut inlier_offsets: Vec<f64> = offsets
        .iter()
        .zip(&outlier)
        .filter(|(_, o)| !**o)
        .map(|(v, _)| *v)
        .collect();
    if inlier_offsets.len() < 2 {
        return Err(SyncError::InsufficientData(inlier_offsets.len()));
    }
    t0 = median(&mut inlier_offsets);
    let residuals: Vec<f64> = offsets.iter().map(|o| o - t0).collect();

    let inlier_idx: Vec<usize> = (0..obs.len()).filter(|&i| !outlier[i]).collect();
    let mut segments = Vec::new();
    let mut start = inlier_idx[0];
    for w in inlier_idx.windows(2) {
        if (residuals[w[1]] - residuals[w[0]]).abs() > tol_ms {
            segments.push((start, w[0]));
            start = w[1];
        }
    }
    segments.push((start, *inlier_idx.last().expect("non-empty")));

    let med = median(&mut inlier_idx.iter().map(|&i| residuals[i]).collect::<Vec<_>>());
    let mut best: Option<(usize, usize)> = None;
    let mut run: Option<(usize, usize)> = None;
    for &i in &inlier_idx {
        if (residuals[i] - med).abs() <= tol_ms {
            run = Some(run.map_or((i, i), |(s, _)| (s, i)));
        } else {
            run = None;
        }
        if let Some((s, e)) = run {
            let longer = best.is_none_or(|(bs, be)| {
                obs[e].frame_index - obs[s].frame_index > obs[be].frame_index - obs[bs].frame_index
            });
            if longer {
                best = Some((s, e));
            }
        }
    }
    // the median is attained by some inlier, so a run always exists
    let (s, e) = best.unwrap_or((inlier_idx[0], inlier_idx[0]));
    let stable_region = FrameSpan {
        first: obs[s].frame_index,
        last: obs[e].frame_index,
    };

    Ok(DriftModel {
        nominal_fps,
        tol_ms,
        offset_ms: t0,
        observations: obs,
        residuals,
        outlier,
        segments,
        stable_region,
    })
}

/// Clock increments between two frames must be non-negative and at most
/// twice the nominal duration (every frame dropped), up to `tol_ms`.
fn plausible(a: &Observation, b: &Observation, period: f64, tol_ms: f64) -> bool {
    let dt = (b.timestamp_ms - a.timestamp_ms) as f64;
    let df = (b.frame_index - a.frame_index) as f64;
    dt >= -tol_ms && dt <= 2.0 * df * period + tol_ms
}

fn flag_misreads(obs: &[Observation], residuals: &[f64], period: f64, tol_ms: f64) -> Vec<bool> {
    let n = obs.len();
    let mut flagged = vec![false; n];
    let agree = |i: usize, j: usize| (residuals[i] - residuals[j]).abs() <= tol_ms;
    for i in 0..n {
        let prev = i.checked_sub(1);
        let next = (i + 1 < n).then_some(i + 1);
        flagged[i] = match (prev, next) {
            (Some(p), Some(q)) => {
                let isolated = !agree(i, p) && !agree(i, q) && agree(p, q);
                let impossible = !plausible(&obs[p], &obs[i], period, tol_ms)
                    && !plausible(&obs[i], &obs[q], period, tol_ms)
                    && plausible(&obs[p], &obs[q], period, tol_ms);
                isolated || impossible
            }
            (None, Some(q)) => {
                !plausible(&obs[i], &obs[q], period, tol_ms)
                    && q + 1 < n
                    && plausible(&obs[q], &obs[q + 1], period, tol_ms)
            }
            (Some(p), None) => {
                !plausible(&obs[p], &obs[i], period, tol_ms) && p > 0 && plausible(&obs[p - 1], &obs[p], period, tol_ms)
            }
            (None, None) => false,
        };
    }
    flagged
}

/// Frames to query next: midpoints of the gaps between inlier observations
/// that fall in different residual segments, nearest to the stable region
/// first. Gaps between adjacent frames cannot be narrowed and are skipped.
pub fn refine(drift: &DriftModel, budget: usize) -> Vec<usize> {
    if budget == 0 {
        return Vec::new();
    }
    let observed: Vec<usize> = drift.observations.iter().map(|o| o.frame_index).collect();
    let mut gaps: Vec<(usize, usize, usize)> = Vec::new();
    for w in drift.segments.windows(2) {
        let a = drift.observations[w[0].1].frame_index;
        let b = drift.observations[w[1].0].frame_index;
        if b - a < 2 {
            continue;
        }
        let mut mid = (a + b) / 2;
        while observed.binary_search(&mid).is_ok() && mid + 1 < b {
            mid += 1;
        }
        if observed.binary_search(&mid).is_ok() {
            continue;
        }
        let stable = drift.stable_region;
        let distance = if b <= stable.first {
            stable.first - b
        } else if a >= stable.last {
            a - stable.last
        } else {
            0
        };
        gaps.push((distance, a, mid));
    }
    gaps.sort();
    gaps.into_iter().take(budget).map(|(_, _, mid)| mid).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clock_30fps(frame: usize, start: i64, shift_frames: usize) -> i64 {
        start + ((frame - shift_frames) as f64 * 1000.0 / 30.0).round() as i64
    }

    fn obs(frames: &[usize], ts: impl Fn(usize) -> i64) -> Vec<Observation> {
        frames
            .iter()
            .map(|&f| Observation {
                frame_index: f,
                timestamp_ms: ts(f),
            })
            .collect()
    }

    const TOL: f64 = 20.0;

    #[test]
    fn perfect_clock_is_stable() {
        let o = obs(&[0, 10, 20, 30, 40, 50], |f| clock_30fps(f, 1000, 0));
        let d = fit_drift(&o, 30.0, TOL).unwrap();
        assert!(d.residuals.iter().all(|r| r.abs() <= 0.5));
        assert_eq!(d.stable_region, FrameSpan { first: 0, last: 50 });
        assert!(d.is_stable_everywhere());
        assert!(refine(&d, 8).is_empty());
    }

    #[test]
    fn duplicated_frame_steps_the_residuals() {
        // frame 61 repeats frame 60, so later frames show one period earlier
        let frames: Vec<usize> = (0..=99).step_by(9).collect();
        let o = obs(&frames, |f| clock_30fps(f, 5000, usize::from(f > 60)));
        let d = fit_drift(&o, 30.0, TOL).unwrap();
        let before = d.residuals[frames.iter().position(|&f| f == 54).unwrap()];
        let after = d.residuals[frames.iter().position(|&f| f == 63).unwrap()];
        assert!(
            ((before - after) - 1000.0 / 30.0).abs() < 1.0,
            "step {before} -> {after}"
        );
        assert_eq!(d.stable_region, FrameSpan { first: 0, last: 54 });
        assert_eq!(d.segments.len(), 2);
        assert_eq!(refine(&d, 8), vec![58]);
    }

    #[test]
    fn planted_misread_is_excluded() {
        let frames = [0, 10, 20, 30, 40, 50, 60];
        let o = obs(&frames, |f| clock_30fps(f, 2000, 0) + if f == 30 { 500 } else { 0 });
        let d = fit_drift(&o, 30.0, TOL).unwrap();
        assert_eq!(d.outliers().map(|o| o.frame_index).collect::<Vec<_>>(), vec![30]);
        assert_eq!(d.stable_region, FrameSpan { first: 0, last: 60 });
        assert_eq!(d.inliers().count(), 6);
        assert!(refine(&d, 8).is_empty());
    }

    #[test]
    fn implausible_endpoint_is_a_misread() {
        let frames = [0, 1, 2, 3, 4];
        let o = obs(&frames, |f| clock_30fps(f, 2000, 0) + if f == 0 { 900 } else { 0 });
        let d = fit_drift(&o, 30.0, TOL).unwrap();
        assert!(d.outlier[0]);
        assert_eq!(d.stable_region, FrameSpan { first: 1, last: 4 });
    }

    #[test]
    fn refinement_bisects_step_gap() {
        let frames = [0, 25, 50, 75, 100];
        let o = obs(&frames, |f| clock_30fps(f, 0, 0) + if f >= 75 { 200 } else { 0 });
        let d = fit_drift(&o, 30.0, TOL).unwrap();
        assert_eq!(refine(&d, 8), vec![62]);
        assert!(refine(&d, 0).is_empty());
    }

    #[test]
    fn refinement_orders_by_distance_to_stable_region() {
        // stable 0..=300, steps in (300, 400) and (500, 600)
        let frames = [0, 100, 200, 300, 400, 500, 600];
        let o = obs(&frames, |f| {
            clock_30fps(f, 0, 0)
                + if f >= 600 {
                    400
                } else if f >= 400 {
                    200
                } else {
                    0
                }
        });
        let d = fit_drift(&o, 30.0, TOL).unwrap();
        assert_eq!(d.stable_region, FrameSpan { first: 0, last: 300 });
        assert_eq!(refine(&d, 8), vec![350, 550]);
        assert_eq!(refine(&d, 1), vec![350]);
    }

    #[test]
    fn too_few_observations() {
        let o = obs(&[5], |f| f as i64);
        assert!(matches!(fit_drift(&o, 30.0, TOL), Err(SyncError::InsufficientData(1))));
        assert!(fit_drift(&[], 30.0, TOL).is_err());
    }
}
