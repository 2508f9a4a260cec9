use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::agent::TargetReply;
use crate::model::{bbox_of, BBox, PoseTensor};

use super::{associate, candidates, iou, weighted_center, KalmanFilter, TrackConfig, TrackError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Anchor,
    Propagated,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub frame: usize,
    /// Chosen person, `-1` when missing.
    pub index: i32,
    pub status: TrackStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bbox: Option<BBox>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub center: Option<[f64; 2]>,
}

impl TrackFrame {
    fn missing(frame: usize) -> Self {
        Self {
            frame,
            index: -1,
            status: TrackStatus::Missing,
            bbox: None,
            center: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub frames: Vec<TrackFrame>,
    /// Last accepted target box of the forward pass.
    pub last_box: Option<BBox>,
}

impl TrackResult {
    pub fn indices(&self) -> Vec<i32> {
        self.frames.iter().map(|f| f.index).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.frames.iter().filter(|f| f.status == TrackStatus::Missing).count()
    }
}

struct Pass<'a> {
    tensor: &'a PoseTensor,
    config: &'a TrackConfig,
    anchors: &'a BTreeMap<usize, i32>,
    filter: Option<KalmanFilter<f64>>,
    last_box: Option<BBox>,
}

impl Pass<'_> {
    /// Re-initializes at an anchor, warming up on the accepted frames that
    /// directly precede it in pass order when they agree with the anchor box.
    fn reset_at_anchor(&mut self, out: &[TrackFrame], order: &[usize], pos: usize, center: Vector2<f64>, bbox: BBox) {
        let mut history: Vec<Vector2<f64>> = Vec::new();
        let consistent = pos
            .checked_sub(1)
            .and_then(|p| out[order[p]].bbox)
            .is_some_and(|b| iou(&b, &bbox) >= self.config.iou_gate);
        if consistent {
            for &t in order[..pos].iter().rev().take(self.config.warmup.saturating_sub(1)) {
                match out[t].center {
                    Some(c) if out[t].status != TrackStatus::Missing => history.push(Vector2::new(c[0], c[1])),
                    _ => break,
                }
            }
        }
        history.reverse();
        let filter = match KalmanFilter::warmed_up(&history, &self.config.kalman) {
            Some(mut kf) => {
                kf.predict();
                kf.update(center);
                kf
            }
            None => KalmanFilter::new(center, &self.config.kalman),
        };
        self.filter = Some(filter);
        self.last_box = Some(bbox);
    }

    fn step(&mut self, out: &mut [TrackFrame], order: &[usize], pos: usize) {
        let t = order[pos];
        if let Some(&index) = self.anchors.get(&t) {
            let person = usize::try_from(index).ok().and_then(|i| self.tensor.person(t, i));
            let anchored = person.and_then(|p| {
                let center = weighted_center(p).ok()?;
                let bbox = bbox_of(p, self.config.conf_threshold)?;
                Some((center, bbox))
            });
            if let Some((center, bbox)) = anchored {
                self.reset_at_anchor(out, order, pos, center, bbox);
                out[t] = TrackFrame {
                    frame: t,
                    index,
                    status: TrackStatus::Anchor,
                    bbox: Some(bbox),
                    center: Some([center.x, center.y]),
                };
                return;
            }
            if index < 0 {
                if let Some(kf) = self.filter.as_mut() {
                    kf.predict();
                }
                out[t] = TrackFrame::missing(t);
                return;
            }
        }
        let Some(kf) = self.filter.as_mut() else {
            out[t] = TrackFrame::missing(t);
            return;
        };
        let prediction = kf.predict();
        let cands = candidates(self.tensor, t, self.config);
        let chosen = associate(&prediction, &cands);
        let accepted = cands.iter().find(|c| c.index as i32 == chosen).filter(|c| {
            self.last_box
                .is_none_or(|last| iou(&last, &c.bbox) >= self.config.iou_gate)
        });
        out[t] = match accepted {
            Some(c) => {
                kf.update(c.center);
                self.last_box = Some(c.bbox);
                TrackFrame {
                    frame: t,
                    index: c.index as i32,
                    status: TrackStatus::Propagated,
                    bbox: Some(c.bbox),
                    center: Some([c.center.x, c.center.y]),
                }
            }
            None => TrackFrame::missing(t),
        };
    }
}

/// Picks the target person in every frame.
///
/// A forward pass starts at the first usable anchor; frames before it are
/// filled by the same procedure run backwards from that anchor. At every
/// anchor with a chosen person the filter restarts on that person's center,
/// so the result there always equals the anchor choice. An anchor of `-1`
/// marks its frame missing.
pub fn track(tensor: &PoseTensor, anchors: &TargetReply, config: &TrackConfig) -> Result<TrackResult, TrackError> {
    let t_count = tensor.frame_count();
    let anchor_map: BTreeMap<usize, i32> = anchors
        .choices
        .iter()
        .filter(|c| c.frame_index < t_count)
        .map(|c| (c.frame_index, c.index))
        .collect();
    let first = anchor_map
        .iter()
        .find(|&(&t, &i)| {
            usize::try_from(i)
                .ok()
                .and_then(|i| tensor.person(t, i))
                .is_some_and(|p| weighted_center(p).is_ok() && bbox_of(p, config.conf_threshold).is_some())
        })
        .map(|(&t, _)| t)
        .ok_or(TrackError::AnchorRequired)?;

    let mut out: Vec<TrackFrame> = (0..t_count).map(TrackFrame::missing).collect();
    let forward: Vec<usize> = (first..t_count).collect();
    let mut pass = Pass {
        tensor,
        config,
        anchors: &anchor_map,
        filter: None,
        last_box: None,
    };
    for pos in 0..forward.len() {
        pass.step(&mut out, &forward, pos);
    }
    let last_box = pass.last_box;

    // the backward order begins with the frames after `first`, reversed, so
    // the restart at `first` can warm up on them
    let tail = (first + 1..t_count).rev().take(config.warmup);
    let backward: Vec<usize> = tail.chain((0..=first).rev()).collect();
    let start = backward
        .iter()
        .position(|&t| t == first)
        .expect("first anchor in order");
    let mut pass = Pass {
        tensor,
        config,
        anchors: &anchor_map,
        filter: None,
        last_box: None,
    };
    for pos in start..backward.len() {
        pass.step(&mut out, &backward, pos);
    }

    Ok(TrackResult { frames: out, last_box })
}
