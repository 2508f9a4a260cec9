use std::collections::BTreeSet;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::agent::{query_timestamp, AgentBackend, AgentError, AgentImage, TimestampQuery};
use crate::model::{ClockSource, FrameClock};

use super::{
    draw_validation_frames, fit_drift, propagate, refine, sample_initial, validate, DriftModel, Observation, SyncError,
    SyncParams, ValidationReport,
};

/// Synchronization result for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSync {
    pub video_id: String,
    pub nominal_fps: f64,
    pub drift: DriftModel,
    pub clocks: Vec<FrameClock>,
    pub validation: ValidationReport,
    /// Number of frames sent to the agent.
    pub queries: usize,
}

struct Session<'a> {
    backend: &'a dyn AgentBackend,
    video_id: &'a str,
    frame_count: usize,
    images: &'a (dyn Fn(usize) -> Option<AgentImage> + Sync),
    queried: BTreeSet<usize>,
}

impl Session<'_> {
    /// Queries the given frames concurrently. Frames without a usable clock
    /// reading are dropped; transport failures abort.
    fn observe(&mut self, frames: &[usize]) -> Result<Vec<Observation>, SyncError> {
        let fresh: Vec<usize> = frames.iter().copied().filter(|f| self.queried.insert(*f)).collect();
        let replies: Vec<(usize, Result<_, AgentError>)> = std::thread::scope(|s| {
            let handles: Vec<_> = fresh
                .iter()
                .map(|&frame_index| {
                    let query = TimestampQuery {
                        video_id: self.video_id.to_owned(),
                        frame_index,
                        frame_count: self.frame_count,
                        image: (self.images)(frame_index),
                    };
                    let backend = self.backend;
                    s.spawn(move || (frame_index, query_timestamp(backend, &query)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("agent query thread panicked"))
                .collect()
        });
        let mut out = Vec::new();
        for (frame_index, reply) in replies {
            match reply {
                Ok(r) => match r.timestamp_ms() {
                    Some(timestamp_ms) => out.push(Observation {
                        frame_index,
                        timestamp_ms,
                    }),
                    None => debug!("{}: no clock readable in frame {frame_index}", self.video_id),
                },
                Err(e @ (AgentError::Protocol { .. } | AgentError::FixtureMissing { .. })) => {
                    warn!("{}: frame {frame_index} unusable: {e}", self.video_id);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(out)
    }

    fn refine_rounds(
        &mut self,
        obs: &mut Vec<Observation>,
        params: &SyncParams,
        fps: f64,
    ) -> Result<DriftModel, SyncError> {
        let tol = params.tol_ms(fps);
        let mut drift = fit_drift(obs, fps, tol)?;
        for round in 0..params.max_refine_rounds {
            let frames: Vec<usize> = refine(&drift, params.refine_budget)
                .into_iter()
                .filter(|f| !self.queried.contains(f))
                .collect();
            if frames.is_empty() {
                break;
            }
            debug!("{}: refinement round {round} queries {frames:?}", self.video_id);
            obs.extend(self.observe(&frames)?);
            drift = fit_drift(obs, fps, tol)?;
        }
        Ok(drift)
    }
}

/// Runs sampling, drift fitting, refinement, propagation and validation for
/// one video.
///
/// `images` supplies the anonymized frame for a query, or `None` when the
/// backend does not need pixels. If validation fails, the validation readings
/// join the observations, the drift is refitted and a fresh validation set
/// is drawn once.
pub fn synchronize_video(
    backend: &dyn AgentBackend,
    video_id: &str,
    frame_count: usize,
    nominal_fps: f64,
    params: &SyncParams,
    images: &(dyn Fn(usize) -> Option<AgentImage> + Sync),
) -> Result<VideoSync, SyncError> {
    let mut session = Session {
        backend,
        video_id,
        frame_count,
        images,
        queried: BTreeSet::new(),
    };
    let initial = sample_initial(frame_count, params.initial_budget)?;
    let mut obs = session.observe(&initial)?;
    let mut drift = session.refine_rounds(&mut obs, params, nominal_fps)?;
    let mut clocks = propagate(video_id, &drift, frame_count);

    let mut report = ValidationReport {
        tol_ms: params.validation_tol_ms,
        samples: Vec::new(),
        max_error_ms: 0.0,
        passed: true,
    };
    for attempt in 0..2 {
        let frames = draw_validation_frames(&drift, frame_count, params.validation_budget, params.seed + attempt);
        let held_out = session.observe(&frames)?;
        report = validate(&clocks, &held_out, params.validation_tol_ms);
        if report.passed || attempt == 1 {
            break;
        }
        warn!(
            "{video_id}: validation failed at frames {:?}, refitting",
            report.failing_frames()
        );
        obs.extend(held_out);
        drift = session.refine_rounds(&mut obs, params, nominal_fps)?;
        clocks = propagate(video_id, &drift, frame_count);
    }
    if report.passed {
        for s in &report.samples {
            clocks[s.frame_index].source = ClockSource::Validated;
        }
    } else {
        warn!(
            "{video_id}: validation still failing, max error {} ms",
            report.max_error_ms
        );
    }

    Ok(VideoSync {
        video_id: video_id.to_owned(),
        nominal_fps,
        drift,
        clocks,
        validation: report,
        queries: session.queried.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{format_clock_string, FixtureBackend, TimestampReply};

    fn backend_from(video: &str, ts: impl Fn(usize) -> Option<i64>, frames: usize) -> FixtureBackend {
        let mut b = FixtureBackend::default();
        for f in 0..frames {
            let t = ts(f);
            let reply = TimestampReply {
                video_id: video.into(),
                frame_index: f,
                detected: t.is_some(),
                timestamp_raw: t.map(format_clock_string),
                note: String::new(),
            };
            b.insert_timestamp_payload(video, f, reply.to_payload());
        }
        b
    }

    fn no_images(_: usize) -> Option<AgentImage> {
        None
    }

    #[test]
    fn steps_are_localized_to_adjacent_frames() {
        // frames 201 and 402 repeat their predecessors
        let content = |f: usize| -> usize { f - usize::from(f > 200) - usize::from(f > 401) };
        let ts = |f: usize| Some(40_000_000 + (content(f) as i64 * 1000) / 30);
        let truth: Vec<i64> = (0..600).map(|f| ts(f).unwrap()).collect();
        let backend = backend_from("a", ts, 600);
        let r = synchronize_video(&backend, "a", 600, 30.0, &SyncParams::default(), &no_images).unwrap();
        assert_eq!(r.clocks.len(), 600);
        assert!(r.validation.passed);
        let worst = r
            .clocks
            .iter()
            .map(|c| (c.timestamp_ms.unwrap() - truth[c.frame_index]).abs())
            .max()
            .unwrap();
        assert!(worst <= 17, "worst error {worst} ms");
        assert!(r.queries < 120, "{} queries", r.queries);
    }

    #[test]
    fn unreadable_frames_are_skipped() {
        let ts = |f: usize| (!f.is_multiple_of(7)).then(|| 1_000_000 + (f as i64 * 1000) / 25);
        let backend = backend_from("v", ts, 200);
        let r = synchronize_video(&backend, "v", 200, 25.0, &SyncParams::default(), &no_images).unwrap();
        assert_eq!(r.clocks[0].timestamp_ms, Some(1_000_000));
        assert_eq!(r.clocks[199].timestamp_ms, Some(1_000_000 + 199 * 40));
        assert!(r.validation.passed);
    }

    #[test]
    fn missing_fixtures_leave_too_few_observations() {
        let backend = FixtureBackend::default();
        let err = synchronize_video(&backend, "v", 50, 30.0, &SyncParams::default(), &no_images).unwrap_err();
        assert!(matches!(err, SyncError::InsufficientData(0)));
    }
}
