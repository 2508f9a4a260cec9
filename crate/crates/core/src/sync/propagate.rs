use crate::model::{ClockSource, FrameClock};

use super::{div_round_half_even, DriftModel};

/// Timestamp for every frame `0..frame_count`.
///
/// Between two inlier observations the clock is interpolated linearly on
/// integer milliseconds with ties to even; outside them it advances at the
/// nominal frame period.
pub fn propagate(video_id: &str, drift: &DriftModel, frame_count: usize) -> Vec<FrameClock> {
    let anchors: Vec<_> = drift.inliers().copied().collect();
    let fps_milli = (drift.nominal_fps * 1000.0).round() as i64;
    let extrapolate = |ts: i64, k: i64| ts + div_round_half_even(k * 1_000_000, fps_milli);
    let Some((first, last)) = anchors.first().zip(anchors.last()) else {
        return (0..frame_count)
            .map(|i| FrameClock::new(video_id, i, None, ClockSource::Propagated))
            .collect();
    };

    let mut out = Vec::with_capacity(frame_count);
    let mut seg = 0;
    for i in 0..frame_count {
        let ts = if i <= first.frame_index {
            extrapolate(first.timestamp_ms, i as i64 - first.frame_index as i64)
        } else if i >= last.frame_index {
            extrapolate(last.timestamp_ms, (i - last.frame_index) as i64)
        } else {
            while anchors[seg + 1].frame_index < i {
                seg += 1;
            }
            let (a, b) = (anchors[seg], anchors[seg + 1]);
            let span = (b.frame_index - a.frame_index) as i64;
            let k = (i - a.frame_index) as i64;
            a.timestamp_ms + div_round_half_even(k * (b.timestamp_ms - a.timestamp_ms), span)
        };
        let source = if anchors.iter().any(|o| o.frame_index == i) {
            ClockSource::AgentObserved
        } else {
            ClockSource::Propagated
        };
        out.push(FrameClock::new(video_id, i, Some(ts), source));
    }
    out
}
