//! Domain types shared by every stage and the pose JSONL schema.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

/// Joint count of the COCO whole-body layout.
pub const DEFAULT_JOINTS: usize = 133;
/// Minimum keypoint confidence for a joint to count as detected.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.98;
/// Length of a day in milliseconds; clocks live in `[0, MS_PER_DAY)`.
pub const MS_PER_DAY: i64 = 86_400_000;
/// Smallest joint count accepted by the loaders (a joint angle needs three).
pub const MIN_JOINTS: usize = 3;

const COCO_WHOLEBODY_NAMES: &str = include_str!("../data/coco_wholebody_joints.txt");

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed frame record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A single 2D joint detection in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_well_formed(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && (0.0..=1.0).contains(&self.confidence)
    }

    pub fn passes(&self, conf_threshold: f64) -> bool {
        self.confidence >= conf_threshold
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }
}

/// One detected person: `J` keypoints in the pose model's joint order.
#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub keypoints: Vec<Keypoint>,
}

impl Person {
    pub fn new(keypoints: Vec<Keypoint>) -> Self {
        Self { keypoints }
    }

    /// Number of joints at or above `conf_threshold`.
    pub fn valid_joint_count(&self, conf_threshold: f64) -> usize {
        self.keypoints.iter().filter(|k| k.passes(conf_threshold)).count()
    }
}

/// A person slot of the padded tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot<'a> {
    Detected(&'a Person),
    Padded,
}

impl<'a> Slot<'a> {
    pub fn person(self) -> Option<&'a Person> {
        match self {
            Slot::Detected(p) => Some(p),
            Slot::Padded => None,
        }
    }

    pub fn is_padded(self) -> bool {
        matches!(self, Slot::Padded)
    }
}

/// All detections of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_index: usize,
    pub persons: Vec<Person>,
}

impl PoseFrame {
    pub fn new(frame_index: usize, persons: Vec<Person>) -> Self {
        Self { frame_index, persons }
    }

    /// `N_t`, the number of detected persons.
    pub fn detected(&self) -> usize {
        self.persons.len()
    }
}

/// Padded multi-person keypoint tensor of shape `T × N × J × 3`.
///
/// Frame `t` of the tensor is frame index `t` of the video. Slots
/// `N_t..N` of a frame are padding and are reported as [`Slot::Padded`]
/// rather than as zero-valued detections.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTensor {
    joints: usize,
    max_persons: usize,
    frames: Vec<PoseFrame>,
}

impl PoseTensor {
    /// Builds a tensor from frame records, sorting them by frame index and
    /// inserting empty frames for index gaps.
    pub fn from_frames(mut frames: Vec<PoseFrame>, joints: Option<usize>) -> Result<Self, ModelError> {
        frames.sort_by_key(|f| f.frame_index);
        let mut j = joints;
        for (pos, frame) in frames.iter().enumerate() {
            if pos > 0 && frames[pos - 1].frame_index == frame.frame_index {
                return Err(ModelError::Schema {
                    line: pos + 1,
                    message: format!("duplicate frame index {}", frame.frame_index),
                });
            }
            for person in &frame.persons {
                check_person(person, &mut j, frame.frame_index)?;
            }
        }
        let joints = j.unwrap_or(DEFAULT_JOINTS);
        let mut dense = Vec::with_capacity(frames.last().map_or(0, |f| f.frame_index + 1));
        for frame in frames {
            while dense.len() < frame.frame_index {
                dense.push(PoseFrame::new(dense.len(), Vec::new()));
            }
            dense.push(frame);
        }
        let max_persons = dense.iter().map(PoseFrame::detected).max().unwrap_or(0);
        Ok(Self {
            joints,
            max_persons,
            frames: dense,
        })
    }

    /// `J`.
    pub fn joints(&self) -> usize {
        self.joints
    }

    /// `N = max_t N_t`.
    pub fn max_persons(&self) -> usize {
        self.max_persons
    }

    /// `T`.
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[PoseFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> Option<&PoseFrame> {
        self.frames.get(t)
    }

    /// Person `n` of frame `t`; `n` must be below [`Self::max_persons`].
    pub fn slot(&self, t: usize, n: usize) -> Slot<'_> {
        assert!(n < self.max_persons, "slot {n} outside N={}", self.max_persons);
        match self.frames[t].persons.get(n) {
            Some(p) => Slot::Detected(p),
            None => Slot::Padded,
        }
    }

    /// Iterates over all `N` slots of frame `t`, padding included.
    pub fn slots(&self, t: usize) -> impl Iterator<Item = Slot<'_>> + '_ {
        (0..self.max_persons).map(move |n| self.slot(t, n))
    }

    pub fn person(&self, t: usize, n: usize) -> Option<&Person> {
        self.frames.get(t).and_then(|f| f.persons.get(n))
    }
}

fn check_person(person: &Person, joints: &mut Option<usize>, frame: usize) -> Result<(), ModelError> {
    let n = person.keypoints.len();
    match *joints {
        Some(j) if j != n => {
            return Err(ModelError::Schema {
                line: frame + 1,
                message: format!("frame {frame}: person has {n} joints, expected {j}"),
            })
        }
        None if n < MIN_JOINTS => {
            return Err(ModelError::Schema {
                line: frame + 1,
                message: format!("frame {frame}: {n} joints, at least {MIN_JOINTS} required"),
            })
        }
        None => *joints = Some(n),
        _ => {}
    }
    if let Some(bad) = person.keypoints.iter().find(|k| !k.is_well_formed()) {
        return Err(ModelError::Schema {
            line: frame + 1,
            message: format!("frame {frame}: malformed keypoint {bad:?}"),
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    frame: usize,
    persons: Vec<PersonRecord>,
}

#[derive(Serialize, Deserialize)]
struct PersonRecord {
    keypoints: Vec<[f64; 3]>,
}

/// Parses pose JSONL from a reader. Blank lines are skipped.
pub fn read_pose_jsonl<R: Read>(reader: R) -> Result<PoseTensor, ModelError> {
    let mut frames = Vec::new();
    let mut joints: Option<usize> = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| ModelError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line).map_err(|e| ModelError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let persons: Vec<Person> = rec
            .persons
            .into_iter()
            .map(|p| {
                Person::new(
                    p.keypoints
                        .into_iter()
                        .map(|[x, y, c]| Keypoint::new(x, y, c))
                        .collect(),
                )
            })
            .collect();
        for person in &persons {
            check_person(person, &mut joints, rec.frame).map_err(|e| match e {
                ModelError::Schema { message, .. } => ModelError::Schema { line: line_no, message },
                other => other,
            })?;
        }
        frames.push(PoseFrame::new(rec.frame, persons));
    }
    PoseTensor::from_frames(frames, joints)
}

pub fn load_pose_jsonl(path: &Path) -> Result<PoseTensor, ModelError> {
    let file = File::open(path).map_err(|e| ModelError::io(path, e))?;
    read_pose_jsonl(file)
}

/// Writes one record per frame with keys in `frame`, `persons`, `keypoints` order.
pub fn write_pose_jsonl<W: Write>(tensor: &PoseTensor, writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for frame in tensor.frames() {
        let rec = FrameRecord {
            frame: frame.frame_index,
            persons: frame
                .persons
                .iter()
                .map(|p| PersonRecord {
                    keypoints: p.keypoints.iter().map(|k| [k.x, k.y, k.confidence]).collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_pose_jsonl(tensor: &PoseTensor, path: &Path) -> Result<(), ModelError> {
    let file = File::create(path).map_err(|e| ModelError::io(path, e))?;
    write_pose_jsonl(tensor, file).map_err(|e| ModelError::io(path, e))
}

/// Axis-aligned box `(x0, y0, x1, y1)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }
}

/// Tight box around the keypoints at or above `conf_threshold`; `None` when
/// fewer than two keypoints qualify.
pub fn bbox_of(person: &Person, conf_threshold: f64) -> Option<BBox> {
    let mut valid = person.keypoints.iter().filter(|k| k.passes(conf_threshold));
    let first = valid.next()?;
    let mut b = BBox::new(first.x, first.y, first.x, first.y);
    let mut count = 1;
    for k in valid {
        b.x0 = b.x0.min(k.x);
        b.y0 = b.y0.min(k.y);
        b.x1 = b.x1.max(k.x);
        b.y1 = b.y1.max(k.y);
        count += 1;
    }
    (count >= 2).then_some(b)
}

/// How a frame's timestamp was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockSource {
    AgentObserved,
    Propagated,
    Validated,
}

/// Timestamp assignment of one video frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameClock {
    pub video_id: String,
    pub frame_index: usize,
    /// Milliseconds since midnight.
    pub timestamp_ms: Option<i64>,
    pub source: ClockSource,
}

impl FrameClock {
    pub fn new(video_id: &str, frame_index: usize, timestamp_ms: Option<i64>, source: ClockSource) -> Self {
        debug_assert!(timestamp_ms.is_none_or(|t| (0..MS_PER_DAY).contains(&t)));
        Self {
            video_id: video_id.to_owned(),
            frame_index,
            timestamp_ms,
            source,
        }
    }
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: T,
    pub height: T,
}

impl<T: Real> CameraModel<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: T, height: T) -> Result<Self, ModelError> {
        let zero = T::zero();
        if !(fx > zero && fy > zero) {
            return Err(ModelError::InvalidCamera(format!(
                "focal lengths must be positive, got {fx}, {fy}"
            )));
        }
        if !(cx >= zero && cx <= width && cy >= zero && cy <= height) {
            return Err(ModelError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn matrix(&self) -> Matrix3<T> {
        let (z, o) = (T::zero(), T::one());
        Matrix3::new(self.fx, z, self.cx, z, self.fy, self.cy, z, z, o)
    }

    pub fn inverse_matrix(&self) -> Matrix3<T> {
        let (z, o) = (T::zero(), T::one());
        Matrix3::new(
            o / self.fx,
            z,
            -self.cx / self.fx,
            z,
            o / self.fy,
            -self.cy / self.fy,
            z,
            z,
            o,
        )
    }

    /// Projects a point given in this camera's frame.
    pub fn project(&self, p: &Vector3<T>) -> Point2<T> {
        Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Pixel to normalized image coordinates.
    pub fn normalize(&self, u: &Point2<T>) -> Point2<T> {
        Point2::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy)
    }
}

/// A reconstructed joint: coordinates are defined only up to a global similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint3D<T: Real> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub valid: bool,
}

impl<T: Real> Joint3D<T> {
    pub fn new(p: Vector3<T>) -> Self {
        let valid = p.iter().all(|v| v.is_finite());
        Self {
            x: p.x,
            y: p.y,
            z: p.z,
            valid,
        }
    }

    pub fn invalid() -> Self {
        Self {
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
            valid: false,
        }
    }

    pub fn vector(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn position(&self) -> Option<Vector3<T>> {
        self.valid.then(|| self.vector())
    }
}

/// One timestamped joint-angle value; `None` where the angle is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSample {
    pub timestamp_ms: i64,
    pub angle_deg: Option<f64>,
}

/// COCO whole-body joint names in index order.
pub fn coco_wholebody_joint_names() -> Vec<&'static str> {
    COCO_WHOLEBODY_NAMES.lines().filter(|l| !l.is_empty()).collect()
}

pub fn coco_joint_index(name: &str) -> Option<usize> {
    coco_wholebody_joint_names().iter().position(|n| *n == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn person(points: &[(f64, f64, f64)]) -> Person {
        Person::new(points.iter().map(|&(x, y, c)| Keypoint::new(x, y, c)).collect())
    }

    fn line(frame: usize, persons: usize, joints: usize) -> String {
        let kp = vec!["[1.0,2.0,0.99]"; joints].join(",");
        let ps = vec![format!("{{\"keypoints\":[{kp}]}}"); persons].join(",");
        format!("{{\"frame\":{frame},\"persons\":[{ps}]}}")
    }

    #[test]
    fn max_persons_and_padding() {
        let text = [line(0, 2, 5), line(1, 1, 5), line(2, 3, 5)].join("\n");
        let t = read_pose_jsonl(text.as_bytes()).unwrap();
        assert_eq!(t.frame_count(), 3);
        assert_eq!(t.max_persons(), 3);
        assert_eq!(t.joints(), 5);
        assert!(t.slot(1, 1).is_padded());
        assert!(t.slot(1, 2).is_padded());
        assert!(!t.slot(2, 2).is_padded());
        assert_eq!(t.slots(0).filter(|s| s.is_padded()).count(), 1);
    }

    #[test]
    fn empty_file_is_empty_tensor() {
        let t = read_pose_jsonl(&b""[..]).unwrap();
        assert_eq!(t.frame_count(), 0);
        assert_eq!(t.max_persons(), 0);
    }

    #[test]
    fn inconsistent_joint_count_is_schema_error() {
        let text = [line(0, 1, 133), line(1, 1, 17)].join("\n");
        match read_pose_jsonl(text.as_bytes()) {
            Err(ModelError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = format!("{}\n{{\"frame\": 1, \"persons\": [", line(0, 1, 3));
        match read_pose_jsonl(text.as_bytes()) {
            Err(ModelError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_confidence_rejected() {
        let text = "{\"frame\":0,\"persons\":[{\"keypoints\":[[0,0,1.5],[0,0,1],[0,0,1]]}]}";
        assert!(matches!(
            read_pose_jsonl(text.as_bytes()),
            Err(ModelError::Schema { .. })
        ));
    }

    #[test]
    fn key_order_is_free_and_gaps_are_filled() {
        let text =
            "{\"persons\":[{\"keypoints\":[[0,0,1],[1,1,1],[2,2,1]]}],\"frame\":3}\n{\"frame\":0,\"persons\":[]}";
        let t = read_pose_jsonl(text.as_bytes()).unwrap();
        assert_eq!(t.frame_count(), 4);
        assert_eq!(t.frame(3).unwrap().detected(), 1);
        assert_eq!(t.frame(1).unwrap().detected(), 0);
        assert_eq!(t.frame(2).unwrap().frame_index, 2);
    }

    #[test]
    fn writer_emits_keys_in_schema_order() {
        let t = PoseTensor::from_frames(vec![PoseFrame::new(0, vec![person(&[(1.0, 2.0, 0.5); 3])])], None).unwrap();
        let mut buf = Vec::new();
        write_pose_jsonl(&t, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "{\"frame\":0,\"persons\":[{\"keypoints\":[[1.0,2.0,0.5],[1.0,2.0,0.5],[1.0,2.0,0.5]]}]}\n"
        );
    }

    #[test]
    fn bbox_examples() {
        let p = person(&[(0.0, 0.0, 1.0), (2.0, 4.0, 1.0)]);
        assert_eq!(bbox_of(&p, 0.98), Some(BBox::new(0.0, 0.0, 2.0, 4.0)));
        let p = person(&[(0.0, 0.0, 0.5), (2.0, 4.0, 0.5)]);
        assert_eq!(bbox_of(&p, 0.98), None);
        let p = person(&[(1.0, 1.0, 0.99), (5.0, 3.0, 0.99), (9.0, 9.0, 0.10)]);
        assert_eq!(bbox_of(&p, 0.98), Some(BBox::new(1.0, 1.0, 5.0, 3.0)));
        let p = person(&[(1.0, 1.0, 0.99), (5.0, 3.0, 0.2)]);
        assert_eq!(bbox_of(&p, 0.98), None);
    }

    #[test]
    fn coco_table_layout() {
        let names = coco_wholebody_joint_names();
        assert_eq!(names.len(), DEFAULT_JOINTS);
        assert_eq!(coco_joint_index("left_knee"), Some(13));
        assert_eq!(coco_joint_index("right_ankle"), Some(16));
        assert_eq!(coco_joint_index("left_hand_root"), Some(91));
        assert_eq!(coco_joint_index("right_pinky_finger4"), Some(132));
    }

    #[test]
    fn camera_invariants() {
        assert!(CameraModel::new(100.0, 100.0, 50.0, 50.0, 100.0, 100.0).is_ok());
        assert!(CameraModel::new(0.0, 100.0, 50.0, 50.0, 100.0, 100.0).is_err());
        assert!(CameraModel::new(100.0, 100.0, 150.0, 50.0, 100.0, 100.0).is_err());
        let k = CameraModel::new(800.0, 700.0, 320.0, 240.0, 640.0, 480.0).unwrap();
        let prod = k.matrix() * k.inverse_matrix();
        assert!((prod - Matrix3::identity()).norm() < 1e-12);
    }

    fn arb_person(joints: usize) -> impl Strategy<Value = Person> {
        prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, 0.0f64..=1.0), joints).prop_map(|v| person(&v))
    }

    proptest! {
        #[test]
        fn n_is_max_detected(counts in prop::collection::vec(0usize..5, 0..12)) {
            let frames = counts
                .iter()
                .enumerate()
                .map(|(t, &n)| PoseFrame::new(t, vec![person(&[(0.0, 0.0, 1.0); 4]); n]))
                .collect();
            let tensor = PoseTensor::from_frames(frames, None).unwrap();
            prop_assert_eq!(tensor.max_persons(), counts.iter().copied().max().unwrap_or(0));
        }

        #[test]
        fn jsonl_round_trip(counts in prop::collection::vec(0usize..4, 1..6), seed_people in prop::collection::vec(arb_person(4), 12)) {
            let mut it = seed_people.into_iter().cycle();
            let frames: Vec<PoseFrame> = counts
                .iter()
                .enumerate()
                .map(|(t, &n)| PoseFrame::new(t, (0..n).map(|_| it.next().unwrap()).collect()))
                .collect();
            let tensor = PoseTensor::from_frames(frames, Some(4)).unwrap();
            let mut buf = Vec::new();
            write_pose_jsonl(&tensor, &mut buf).unwrap();
            let back = read_pose_jsonl(buf.as_slice()).unwrap();
            prop_assert_eq!(back.frames(), tensor.frames());
            prop_assert_eq!(back.max_persons(), tensor.max_persons());
        }

        #[test]
        fn bbox_order_invariant_and_monotone(p in arb_person(8), thr_hi in 0.5f64..1.0, drop in 0.0f64..0.5, rot in 0usize..8) {
            let mut rotated = p.clone();
            rotated.keypoints.rotate_left(rot);
            prop_assert_eq!(bbox_of(&p, thr_hi), bbox_of(&rotated, thr_hi));
            let lo = thr_hi - drop;
            if let Some(hi_box) = bbox_of(&p, thr_hi) {
                let lo_box = bbox_of(&p, lo).unwrap();
                prop_assert!(lo_box.x0 <= hi_box.x0 && lo_box.y0 <= hi_box.y0);
                prop_assert!(lo_box.x1 >= hi_box.x1 && lo_box.y1 >= hi_box.y1);
            }
        }
    }
}
