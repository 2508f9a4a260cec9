//! Synthetic two-camera recordings with known geometry, clocks and angles.
//!
//! [`generate`] animates a parametric actor plus optional distractors, projects
//! them through calibrated cameras, perturbs the 2D joints and emits
//! everything the pipeline consumes: pose sequences, replayable agent replies
//! and the ground truth to score against. Output is a pure function of the
//! [`SceneSpec`], seed included.

mod body;
mod output;
mod rig;

use std::collections::BTreeSet;

use nalgebra::{Point2, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{format_clock_string, TimestampReply};
use crate::kinematics::{angle_series, default_triples, JointTriple};
use crate::model::{
    AngleSample, CameraModel, Joint3D, Keypoint, Person, PoseFrame, PoseTensor, DEFAULT_JOINTS, MS_PER_DAY,
};

pub use body::{ActorSpec, Side, BODY_JOINTS};
pub use output::{pose_file_name, write_scene, FRAMES_FILE_PREFIX, REFERENCE_FILE_PREFIX, SCENE_FILE, TRUTH_DIR};
pub use rig::{relative_pose, true_fundamental, RigCamera};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid camera rig: {0}")]
    InvalidRig(String),
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One camera and its recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewSpec {
    pub id: String,
    pub fps: f64,
    /// Camera position angle about the vertical through the look-at point.
    pub yaw_deg: f64,
    pub distance_m: f64,
    pub camera_height_m: f64,
    /// Height of the look-at point above the floor.
    pub target_height_m: f64,
    pub width: u32,
    pub height: u32,
    pub focal_px: f64,
    /// Recording start relative to the scene start.
    pub start_offset_ms: i64,
    /// Frames that repeat the previous frame, image and clock included.
    pub duplicated_frames: Vec<usize>,
    /// Frames whose clock reply carries a wrong reading.
    pub misread_frames: Vec<usize>,
    /// Scene-time intervals `[start, end)` in seconds during which the actor is not detected.
    pub occlusions_s: Vec<[f64; 2]>,
}

impl Default for ViewSpec {
    fn default() -> Self {
        Self {
            id: "cam_a".into(),
            fps: 30.0,
            yaw_deg: -15.0,
            distance_m: 4.5,
            camera_height_m: 0.9,
            target_height_m: 0.9,
            width: 1920,
            height: 1080,
            focal_px: 1920.0,
            start_offset_ms: 0,
            duplicated_frames: Vec::new(),
            misread_frames: Vec::new(),
            occlusions_s: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Constant-velocity walk from `start_x_m` to `end_x_m` over the scene.
    Straight,
    /// Back-and-forth walk `amplitude · sin(2πt / period + phase)` across the actor.
    Crossing,
}

/// A bystander walking along x at a fixed depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistractorSpec {
    pub path: PathKind,
    pub depth_m: f64,
    pub start_x_m: f64,
    pub end_x_m: f64,
    pub amplitude_m: f64,
    pub period_s: f64,
    pub phase_deg: f64,
    pub gait_hz: f64,
}

impl Default for DistractorSpec {
    fn default() -> Self {
        Self {
            path: PathKind::Crossing,
            depth_m: -1.0,
            start_x_m: -1.5,
            end_x_m: 1.5,
            amplitude_m: 1.4,
            period_s: 12.0,
            phase_deg: 0.0,
            gait_hz: 1.1,
        }
    }
}

impl DistractorSpec {
    fn x(&self, t: f64, duration_s: f64) -> f64 {
        match self.path {
            PathKind::Straight => self.start_x_m + (self.end_x_m - self.start_x_m) * t / duration_s,
            PathKind::Crossing => {
                self.amplitude_m * (2.0 * std::f64::consts::PI * t / self.period_s + self.phase_deg.to_radians()).sin()
            }
        }
    }

    fn skeleton(&self, t: f64, duration_s: f64) -> [Vector3<f64>; BODY_JOINTS] {
        let gait = ActorSpec {
            gait_hz: self.gait_hz,
            phase_deg: self.phase_deg,
            knee_min_deg: 120.0,
            knee_max_deg: 178.0,
            sway_x_m: 0.0,
            sway_z_m: 0.0,
            ..ActorSpec::default()
        };
        let pelvis = Vector3::new(self.x(t, duration_s), gait.pelvis(t).y, self.depth_m);
        body::skeleton_at(&gait, pelvis, 0.0, t)
    }
}

/// Full description of a synthetic recording session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub duration_s: f64,
    /// Wall-clock time at scene start, ms since midnight.
    pub clock_start_ms: i64,
    pub views: Vec<ViewSpec>,
    pub actor: ActorSpec,
    pub distractors: Vec<DistractorSpec>,
    /// Standard deviation of the Gaussian noise on body joints.
    pub noise_px: f64,
    /// Probability that a body joint is displaced while keeping a high confidence.
    pub outlier_fraction: f64,
    /// Displacement range of outlier joints.
    pub outlier_px: [f64; 2],
    pub body_confidence: [f64; 2],
    /// Confidence range of the non-body joints and of joints outside the image.
    pub low_confidence: [f64; 2],
    pub reference_hz: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::clean()
    }
}

impl SceneSpec {
    /// Two cameras 30° apart, 30 s at 30 fps, 400 ms start offset, no noise.
    pub fn clean() -> Self {
        Self {
            seed: 7,
            duration_s: 30.0,
            clock_start_ms: 51_785_120,
            views: vec![
                ViewSpec {
                    duplicated_frames: vec![211, 517],
                    ..ViewSpec::default()
                },
                ViewSpec {
                    id: "cam_b".into(),
                    yaw_deg: 15.0,
                    start_offset_ms: 400,
                    duplicated_frames: vec![365],
                    ..ViewSpec::default()
                },
            ],
            actor: ActorSpec::default(),
            distractors: Vec::new(),
            noise_px: 0.0,
            outlier_fraction: 0.0,
            outlier_px: [30.0, 150.0],
            body_confidence: [0.99, 1.0],
            low_confidence: [0.1, 0.5],
            reference_hz: 100.0,
        }
    }

    /// [`SceneSpec::clean`] with 1 px noise, 1% outlier joints and two crossing distractors.
    pub fn noisy() -> Self {
        Self {
            noise_px: 1.0,
            outlier_fraction: 0.01,
            distractors: vec![
                DistractorSpec::default(),
                DistractorSpec {
                    depth_m: 1.2,
                    amplitude_m: 1.8,
                    period_s: 17.0,
                    phase_deg: 90.0,
                    gait_hz: 0.8,
                    ..DistractorSpec::default()
                },
            ],
            ..Self::clean()
        }
    }

    pub fn frame_count(&self, view: &ViewSpec) -> usize {
        (self.duration_s * view.fps).round() as usize
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} s", self.duration_s));
        }
        if self.views.len() < 2 {
            return bad(format!("need at least two views, have {}", self.views.len()));
        }
        if !(self.noise_px >= 0.0 && (0.0..=1.0).contains(&self.outlier_fraction)) {
            return bad("noise must be non-negative and the outlier fraction in [0, 1]".into());
        }
        for range in [self.body_confidence, self.low_confidence] {
            if !(0.0 <= range[0] && range[0] <= range[1] && range[1] <= 1.0) {
                return bad(format!("confidence range {range:?}"));
            }
        }
        if !(self.outlier_px[0] >= 0.0 && self.outlier_px[0] <= self.outlier_px[1]) {
            return bad(format!("outlier displacement range {:?}", self.outlier_px));
        }
        if !(self.reference_hz > 0.0) {
            return bad(format!("reference rate {} Hz", self.reference_hz));
        }
        let mut ids = BTreeSet::new();
        for v in &self.views {
            if !ids.insert(v.id.as_str()) {
                return bad(format!("duplicate view id {:?}", v.id));
            }
            if !(v.fps > 0.0 && v.fps.is_finite()) {
                return bad(format!("view {}: fps {}", v.id, v.fps));
            }
            let frames = self.frame_count(v);
            if frames < 2 {
                return bad(format!("view {}: fewer than two frames", v.id));
            }
            if v.duplicated_frames.iter().any(|&f| f == 0 || f >= frames) {
                return bad(format!("view {}: duplicated frames must lie in 1..{frames}", v.id));
            }
            let end = self.clock_start_ms + v.start_offset_ms + (self.duration_s * 1000.0).ceil() as i64 + 20_000;
            if self.clock_start_ms + v.start_offset_ms < 0 || end >= MS_PER_DAY {
                return bad(format!("view {}: clock leaves the day", v.id));
            }
        }
        Ok(())
    }
}

/// One rendered camera stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticView {
    pub id: String,
    pub fps: f64,
    pub camera: RigCamera,
    pub poses: PoseTensor,
    /// True clock reading of every frame.
    pub clock_ms: Vec<i64>,
    /// Whether the frame repeats its predecessor.
    pub duplicate: Vec<bool>,
    /// Index of the actor in each frame's person list, −1 where undetected.
    pub target: Vec<i32>,
    /// Ground-truth world joints of the actor per frame, `None` where undetected.
    pub actor_world: Vec<Option<[Vector3<f64>; BODY_JOINTS]>>,
    /// Agent replies for every frame, in prompt JSON layout.
    pub timestamp_replies: Vec<TimestampReply>,
}

/// Generated recordings plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub views: Vec<SyntheticView>,
    /// Actor angle series on the wall clock at `reference_hz`, per default triple.
    pub reference: Vec<(JointTriple, Vec<AngleSample>)>,
}

impl SyntheticScene {
    pub fn view(&self, id: &str) -> Option<&SyntheticView> {
        self.views.iter().find(|v| v.id == id)
    }

    pub fn reference_series(&self, triple: &str) -> Option<&[AngleSample]> {
        self.reference
            .iter()
            .find(|(t, _)| t.name == triple)
            .map(|(_, s)| s.as_slice())
    }
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Parent body joint of each non-body slot of the COCO whole-body layout.
fn extra_parent(joint: usize) -> usize {
    match joint {
        17..=19 => 15,
        20..=22 => 16,
        23..=90 => 0,
        91..=111 => 9,
        _ => 10,
    }
}

fn build_rig(spec: &SceneSpec) -> Result<Vec<RigCamera>, SynthError> {
    let mut cams: Vec<RigCamera> = Vec::new();
    for v in &spec.views {
        let w = f64::from(v.width);
        let h = f64::from(v.height);
        let k = CameraModel::new(v.focal_px, v.focal_px, w / 2.0, h / 2.0, w, h)
            .map_err(|e| SynthError::InvalidRig(format!("view {}: {e}", v.id)))?;
        let origin = spec.actor.origin;
        let yaw = v.yaw_deg.to_radians();
        let center = Vector3::new(
            origin[0] + v.distance_m * yaw.sin(),
            -v.camera_height_m,
            origin[1] - v.distance_m * yaw.cos(),
        );
        let target = Vector3::new(origin[0], -v.target_height_m, origin[1]);
        for (other, prev) in spec.views.iter().zip(&cams) {
            if (prev.center_vector() - center).norm() < 1e-6 {
                return Err(SynthError::InvalidRig(format!(
                    "views {} and {} share a camera center",
                    other.id, v.id
                )));
            }
        }
        cams.push(RigCamera::looking_at(k, center, target)?);
    }
    Ok(cams)
}

struct Perturbation<'a> {
    spec: &'a SceneSpec,
    noise: Normal<f64>,
}

impl Perturbation<'_> {
    fn person(&self, camera: &RigCamera, joints: &[Vector3<f64>; BODY_JOINTS], rng: &mut ChaCha8Rng) -> Person {
        let s = self.spec;
        let mut body: Vec<Keypoint> = Vec::with_capacity(DEFAULT_JOINTS);
        for p in joints {
            let Some(u) = camera.project(p) else {
                body.push(Keypoint::new(0.0, 0.0, 0.0));
                continue;
            };
            let mut u = u + Vector2::new(self.noise.sample(rng), self.noise.sample(rng));
            if rng.random::<f64>() < s.outlier_fraction {
                let r = rng.random_range(s.outlier_px[0]..=s.outlier_px[1]);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                u += Vector2::new(r * a.cos(), r * a.sin());
            }
            let range = if camera.in_image(&u) {
                s.body_confidence
            } else {
                s.low_confidence
            };
            body.push(Keypoint::new(u.x, u.y, rng.random_range(range[0]..=range[1])));
        }
        let jitter = Normal::new(0.0, 6.0).expect("positive sigma");
        let mut keypoints = body.clone();
        for j in BODY_JOINTS..DEFAULT_JOINTS {
            let parent = body[extra_parent(j)];
            let u = Point2::new(parent.x + jitter.sample(rng), parent.y + jitter.sample(rng));
            let c = rng.random_range(s.low_confidence[0]..=s.low_confidence[1]);
            keypoints.push(Keypoint::new(u.x, u.y, c));
        }
        for k in &mut keypoints {
            *k = Keypoint::new(round4(k.x), round4(k.y), round4(k.confidence));
        }
        Person::new(keypoints)
    }
}

fn render_view(
    spec: &SceneSpec,
    index: usize,
    camera: RigCamera,
    perturb: &Perturbation<'_>,
) -> Result<SyntheticView, SynthError> {
    let v = &spec.views[index];
    let frames = spec.frame_count(v);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let duplicated: BTreeSet<usize> = v.duplicated_frames.iter().copied().collect();
    let misread: BTreeSet<usize> = v.misread_frames.iter().copied().collect();

    let mut out = SyntheticView {
        id: v.id.clone(),
        fps: v.fps,
        camera: camera.clone(),
        poses: PoseTensor::from_frames(Vec::new(), Some(DEFAULT_JOINTS)).expect("empty tensor"),
        clock_ms: Vec::with_capacity(frames),
        duplicate: Vec::with_capacity(frames),
        target: Vec::with_capacity(frames),
        actor_world: Vec::with_capacity(frames),
        timestamp_replies: Vec::with_capacity(frames),
    };
    let mut pose_frames: Vec<PoseFrame> = Vec::with_capacity(frames);
    let mut repeats = 0usize;
    for f in 0..frames {
        let dup = duplicated.contains(&f);
        out.duplicate.push(dup);
        if dup {
            repeats += 1;
            let prev = pose_frames
                .last()
                .expect("frame 0 is never a duplicate")
                .persons
                .clone();
            pose_frames.push(PoseFrame::new(f, prev));
            out.clock_ms.push(out.clock_ms[f - 1]);
            out.target.push(out.target[f - 1]);
            out.actor_world.push(out.actor_world[f - 1]);
        } else {
            let scene_ms = v.start_offset_ms as f64 + (f - repeats) as f64 * 1000.0 / v.fps;
            let t = scene_ms / 1000.0;
            out.clock_ms.push(spec.clock_start_ms + scene_ms.round() as i64);

            let occluded = v.occlusions_s.iter().any(|[a, b]| (*a..*b).contains(&t));
            let mut persons: Vec<(bool, Person)> = Vec::new();
            let actor = (!occluded).then(|| spec.actor.skeleton(t));
            if let Some(joints) = &actor {
                persons.push((true, perturb.person(&camera, joints, &mut rng)));
            }
            for d in &spec.distractors {
                persons.push((
                    false,
                    perturb.person(&camera, &d.skeleton(t, spec.duration_s), &mut rng),
                ));
            }
            persons.shuffle(&mut rng);
            out.target
                .push(persons.iter().position(|p| p.0).map_or(-1, |i| i as i32));
            out.actor_world.push(actor);
            pose_frames.push(PoseFrame::new(f, persons.into_iter().map(|p| p.1).collect()));
        }
        let shown = out.clock_ms[f] + if misread.contains(&f) { 10_000 } else { 0 };
        out.timestamp_replies.push(TimestampReply {
            video_id: v.id.clone(),
            frame_index: f,
            detected: true,
            timestamp_raw: Some(format_clock_string(shown)),
            note: String::new(),
        });
    }
    out.poses = PoseTensor::from_frames(pose_frames, Some(DEFAULT_JOINTS))
        .map_err(|e| SynthError::InvalidSpec(format!("view {}: {e}", v.id)))?;
    Ok(out)
}

fn reference_series(spec: &SceneSpec) -> Vec<(JointTriple, Vec<AngleSample>)> {
    let end_ms = spec
        .views
        .iter()
        .map(|v| v.start_offset_ms as f64 + spec.duration_s * 1000.0)
        .fold(0.0, f64::max);
    let n = (end_ms / 1000.0 * spec.reference_hz).floor() as usize;
    let skeletons: Vec<(i64, Vec<Joint3D<f64>>)> = (0..=n)
        .map(|k| {
            let t = k as f64 / spec.reference_hz;
            let joints = spec.actor.skeleton(t).iter().map(|p| Joint3D::new(*p)).collect();
            (spec.clock_start_ms + (t * 1000.0).round() as i64, joints)
        })
        .collect();
    default_triples()
        .into_iter()
        .map(|triple| {
            let series = angle_series(skeletons.iter().map(|(ts, j)| (*ts, j.as_slice())), &triple);
            (triple, series)
        })
        .collect()
}

/// Renders the scene. Deterministic in `spec`.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let rig = build_rig(spec)?;
    let perturb = Perturbation {
        spec,
        noise: Normal::new(0.0, spec.noise_px).map_err(|e| SynthError::InvalidSpec(e.to_string()))?,
    };
    let views = rig
        .into_iter()
        .enumerate()
        .map(|(i, cam)| render_view(spec, i, cam, &perturb))
        .collect::<Result<_, _>>()?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        views,
        reference: reference_series(spec),
    })
}
