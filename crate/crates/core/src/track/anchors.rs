use crate::model::PoseTensor;
use crate::sync::sample_initial;

use super::{candidates, TrackConfig};

/// Default anchor budget: one agent query per this many frames.
pub const DEFAULT_FRAMES_PER_ANCHOR: usize = 300;

/// Per-frame anchor priority: `1 / (1 + d_min)` over candidate centers
/// (zero with fewer than two candidates), plus one where the detected person
/// count differs from the previous frame.
pub fn anchor_scores(tensor: &PoseTensor, config: &TrackConfig) -> Vec<f64> {
    let mut prev_count = None;
    (0..tensor.frame_count())
        .map(|t| {
            let cands = candidates(tensor, t, config);
            let mut d_min = f64::INFINITY;
            for (i, a) in cands.iter().enumerate() {
                for b in &cands[i + 1..] {
                    d_min = d_min.min((a.center - b.center).norm());
                }
            }
            let proximity = if d_min.is_finite() { 1.0 / (1.0 + d_min) } else { 0.0 };
            let count = tensor.frame(t).map_or(0, |f| f.detected());
            let instability = match prev_count.replace(count) {
                Some(p) if p != count => 1.0,
                _ => 0.0,
            };
            proximity + instability
        })
        .collect()
}

/// Frames to send to the agent for target identification.
///
/// Up to `budget` frames with the highest positive score, no two within the
/// suppression radius, merged with `budget` evenly spaced backbone frames.
/// Sorted and deduplicated.
pub fn sample_anchor_frames(tensor: &PoseTensor, budget: usize, config: &TrackConfig) -> Vec<usize> {
    let t_count = tensor.frame_count();
    if t_count == 0 || budget == 0 {
        return Vec::new();
    }
    let mut out = if t_count == 1 || budget == 1 {
        vec![0]
    } else {
        sample_initial(t_count, budget).expect("valid backbone arguments")
    };

    let scores = anchor_scores(tensor, config);
    let mut order: Vec<usize> = (0..t_count).filter(|&t| scores[t] > 0.0).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::new();
    for t in order {
        if picked.len() == budget {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(t) > config.anchor_nms_radius) {
            picked.push(t);
        }
    }
    out.extend(picked);
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Keypoint, Person, PoseFrame};

    fn body(cx: f64, cy: f64) -> Person {
        Person::new(
            (0..17)
                .map(|j| Keypoint::new(cx + (j % 3) as f64 * 10.0, cy + j as f64 * 10.0, 0.99))
                .collect(),
        )
    }

    fn tensor(frames: Vec<Vec<Person>>) -> PoseTensor {
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(t, p)| PoseFrame::new(t, p))
            .collect();
        PoseTensor::from_frames(frames, Some(17)).unwrap()
    }

    #[test]
    fn single_person_uses_backbone() {
        let t = tensor((0..100).map(|t| vec![body(t as f64, 0.0)]).collect());
        assert_eq!(sample_anchor_frames(&t, 3, &TrackConfig::default()), vec![0, 50, 99]);
    }

    #[test]
    fn crossing_frame_is_selected() {
        let t = tensor(
            (0..100)
                .map(|t| {
                    let x = 4.0 * t as f64;
                    vec![body(x, 0.0), body(320.0 - x, 0.0)]
                })
                .collect(),
        );
        let scores = anchor_scores(&t, &TrackConfig::default());
        let best = (0..100).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        assert_eq!(best, 40);
        assert!(sample_anchor_frames(&t, 2, &TrackConfig::default()).contains(&40));
    }

    #[test]
    fn count_change_is_selected() {
        let t = tensor(
            (0..60)
                .map(|t| {
                    let mut p = vec![body(0.0, 0.0)];
                    if t >= 10 {
                        p.push(body(900.0, 0.0));
                    }
                    p
                })
                .collect(),
        );
        let frames = sample_anchor_frames(&t, 2, &TrackConfig::default());
        assert!(frames.contains(&10), "{frames:?}");
        assert!(frames.contains(&0) && frames.contains(&59));
    }
}
