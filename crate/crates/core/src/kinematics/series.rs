use crate::model::AngleSample;

pub const DEFAULT_MAX_GAP_MS: i64 = 200;

/// Linear interpolation of the valid samples of `series` at `targets`.
///
/// A target is absent if it lies outside the valid span, or between two
/// consecutive valid samples more than `max_gap_ms` apart. Absent samples in
/// the input count as gaps, and a target matching the timestamp of an absent
/// sample stays absent. `series` timestamps must strictly increase.
pub fn resample(series: &[AngleSample], targets: &[i64], max_gap_ms: i64) -> Vec<AngleSample> {
    debug_assert!(series.windows(2).all(|w| w[0].timestamp_ms < w[1].timestamp_ms));
    let valid: Vec<(i64, f64)> = series
        .iter()
        .filter_map(|s| s.angle_deg.filter(|a| a.is_finite()).map(|a| (s.timestamp_ms, a)))
        .collect();
    targets
        .iter()
        .map(|&t| AngleSample {
            timestamp_ms: t,
            angle_deg: match series.binary_search_by_key(&t, |s| s.timestamp_ms) {
                Ok(i) => series[i].angle_deg.filter(|a| a.is_finite()),
                Err(_) => interpolate(&valid, t, max_gap_ms),
            },
        })
        .collect()
}

fn interpolate(valid: &[(i64, f64)], t: i64, max_gap_ms: i64) -> Option<f64> {
    match valid.binary_search_by_key(&t, |s| s.0) {
        Ok(i) => Some(valid[i].1),
        Err(0) => None,
        Err(i) if i == valid.len() => None,
        Err(i) => {
            let (t0, v0) = valid[i - 1];
            let (t1, v1) = valid[i];
            if t1 - t0 > max_gap_ms {
                return None;
            }
            let w = (t - t0) as f64 / (t1 - t0) as f64;
            Some(v0 + w * (v1 - v0))
        }
    }
}
