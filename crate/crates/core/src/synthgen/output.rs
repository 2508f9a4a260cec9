use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{RigCamera, SceneSpec, SynthError, SyntheticScene};
use crate::agent::{TargetRecord, TARGETS_FILE, TIMESTAMPS_FILE};
use crate::model::save_pose_jsonl;

pub const TRUTH_DIR: &str = "truth";
pub const SCENE_FILE: &str = "scene.json";
/// `frames_<view>.csv`: `frame,clock_ms,target_index,duplicate`.
pub const FRAMES_FILE_PREFIX: &str = "frames_";
/// `angles_<triple>.csv`: `timestamp_ms,angle_deg`.
pub const REFERENCE_FILE_PREFIX: &str = "angles_";

pub fn pose_file_name(view: &str) -> String {
    format!("poses_{view}.jsonl")
}

#[derive(Serialize)]
struct CameraRecord<'a> {
    id: &'a str,
    fps: f64,
    frames: usize,
    camera: &'a RigCamera,
}

#[derive(Serialize)]
struct SceneRecord<'a> {
    spec: &'a SceneSpec,
    cameras: Vec<CameraRecord<'a>>,
}

fn write(path: &Path, contents: &[u8]) -> Result<(), SynthError> {
    fs::write(path, contents).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes pose sequences, agent fixtures and the `truth/` directory into `dir`.
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<(), SynthError> {
    let truth = dir.join(TRUTH_DIR);
    fs::create_dir_all(&truth).map_err(|source| SynthError::Io {
        path: truth.display().to_string(),
        source,
    })?;

    let mut timestamps = String::new();
    let mut targets = String::new();
    for view in &scene.views {
        let path = dir.join(pose_file_name(&view.id));
        save_pose_jsonl(&view.poses, &path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
        for reply in &view.timestamp_replies {
            timestamps.push_str(&reply.to_payload());
            timestamps.push('\n');
        }
        let mut frames = String::from("frame,clock_ms,target_index,duplicate\n");
        for (f, &index) in view.target.iter().enumerate() {
            let record = TargetRecord {
                video: view.id.clone(),
                frame: f,
                index,
            };
            targets.push_str(&serde_json::to_string(&record).expect("record serializes"));
            targets.push('\n');
            let _ = writeln!(
                frames,
                "{f},{},{index},{}",
                view.clock_ms[f],
                u8::from(view.duplicate[f])
            );
        }
        write(
            &truth.join(format!("{FRAMES_FILE_PREFIX}{}.csv", view.id)),
            frames.as_bytes(),
        )?;
    }
    write(&dir.join(TIMESTAMPS_FILE), timestamps.as_bytes())?;
    write(&dir.join(TARGETS_FILE), targets.as_bytes())?;

    for (triple, series) in &scene.reference {
        let mut csv = String::from("timestamp_ms,angle_deg\n");
        for s in series {
            match s.angle_deg {
                Some(a) => writeln!(csv, "{},{a}", s.timestamp_ms),
                None => writeln!(csv, "{},", s.timestamp_ms),
            }
            .expect("string write");
        }
        write(
            &truth.join(format!("{REFERENCE_FILE_PREFIX}{}.csv", triple.name)),
            csv.as_bytes(),
        )?;
    }

    let record = SceneRecord {
        spec: &scene.spec,
        cameras: scene
            .views
            .iter()
            .map(|v| CameraRecord {
                id: &v.id,
                fps: v.fps,
                frames: v.poses.frame_count(),
                camera: &v.camera,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&record).expect("scene serializes");
    write(&truth.join(SCENE_FILE), json.as_bytes())
}
