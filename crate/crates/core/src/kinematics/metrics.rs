use serde::{Deserialize, Serialize};

use super::{resample, KinematicsError};
use crate::model::AngleSample;

/// Agreement of an estimated angle series with a reference.
///
/// Ranges are taken over the co-valid compared samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae_deg: f64,
    pub pearson_r: f64,
    pub range_est: (f64, f64),
    pub range_ref: (f64, f64),
    pub n_compared: usize,
}

fn co_valid<'a>(est: &'a [Option<f64>], reference: &'a [Option<f64>]) -> impl Iterator<Item = (f64, f64)> + 'a {
    est.iter().zip(reference).filter_map(|(a, b)| Some(((*a)?, (*b)?)))
}

fn check_lengths(est: &[Option<f64>], reference: &[Option<f64>]) -> Result<(), KinematicsError> {
    if est.len() != reference.len() {
        return Err(KinematicsError::LengthMismatch(est.len(), reference.len()));
    }
    Ok(())
}

/// Mean absolute difference over samples valid in both aligned series.
pub fn mae(est: &[Option<f64>], reference: &[Option<f64>]) -> Result<f64, KinematicsError> {
    check_lengths(est, reference)?;
    let (sum, n) = co_valid(est, reference).fold((0.0, 0usize), |(s, n), (a, b)| (s + (a - b).abs(), n + 1));
    if n == 0 {
        return Err(KinematicsError::NoOverlap);
    }
    Ok(sum / n as f64)
}

/// Pearson correlation over samples valid in both aligned series.
pub fn pearson(est: &[Option<f64>], reference: &[Option<f64>]) -> Result<f64, KinematicsError> {
    check_lengths(est, reference)?;
    let pairs: Vec<_> = co_valid(est, reference).collect();
    if pairs.is_empty() {
        return Err(KinematicsError::NoOverlap);
    }
    if pairs.len() < 2 {
        return Err(KinematicsError::UndefinedCorrelation("fewer than two samples"));
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(KinematicsError::UndefinedCorrelation("constant series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Minimum and maximum of the valid samples.
pub fn angle_range(series: &[Option<f64>]) -> Result<(f64, f64), KinematicsError> {
    series
        .iter()
        .flatten()
        .fold(None, |acc: Option<(f64, f64)>, &v| {
            Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
        })
        .ok_or(KinematicsError::NoData)
}

/// Two series on a common timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    pub timestamps_ms: Vec<i64>,
    pub est: Vec<Option<f64>>,
    pub reference: Vec<Option<f64>>,
}

fn median_interval(series: &[AngleSample]) -> Option<i64> {
    let mut d: Vec<i64> = series
        .windows(2)
        .map(|w| w[1].timestamp_ms - w[0].timestamp_ms)
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_unstable();
    Some(d[d.len() / 2])
}

/// Resamples the higher-rate series onto the timeline of the other one.
/// On equal rates the reference is resampled onto the estimate.
pub fn align(est: &[AngleSample], reference: &[AngleSample], max_gap_ms: i64) -> AlignedSeries {
    let est_interval = median_interval(est).unwrap_or(i64::MAX);
    let ref_interval = median_interval(reference).unwrap_or(i64::MAX);
    let values = |s: &[AngleSample]| s.iter().map(|s| s.angle_deg).collect::<Vec<_>>();
    if ref_interval <= est_interval {
        let timestamps_ms: Vec<i64> = est.iter().map(|s| s.timestamp_ms).collect();
        let reference = values(&resample(reference, &timestamps_ms, max_gap_ms));
        AlignedSeries {
            est: values(est),
            reference,
            timestamps_ms,
        }
    } else {
        let timestamps_ms: Vec<i64> = reference.iter().map(|s| s.timestamp_ms).collect();
        let est = values(&resample(est, &timestamps_ms, max_gap_ms));
        AlignedSeries {
            est,
            reference: values(reference),
            timestamps_ms,
        }
    }
}

/// Aligns both series and evaluates every metric.
pub fn compare(
    est: &[AngleSample],
    reference: &[AngleSample],
    max_gap_ms: i64,
) -> Result<MetricReport, KinematicsError> {
    let aligned = align(est, reference, max_gap_ms);
    let (e, r): (Vec<_>, Vec<_>) = co_valid(&aligned.est, &aligned.reference)
        .map(|(a, b)| (Some(a), Some(b)))
        .unzip();
    Ok(MetricReport {
        mae_deg: mae(&e, &r)?,
        pearson_r: pearson(&e, &r)?,
        range_est: angle_range(&e)?,
        range_ref: angle_range(&r)?,
        n_compared: e.len(),
    })
}
