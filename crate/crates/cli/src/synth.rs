//! `synthgen`: writes a synthetic scene plus a ready-to-run pipeline config.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use jointsync_core::synthgen::{generate, pose_file_name, write_scene, SceneSpec, TRUTH_DIR};
use serde_json::Value;

use crate::artifacts::write_json;
use crate::config::{apply_override, AgentConfig, AnglesConfig, PipelineConfig, PreprocConfig, ViewConfig};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Clean,
    Noisy,
}

impl Preset {
    pub fn spec(self) -> SceneSpec {
        match self {
            Preset::Clean => SceneSpec::clean(),
            Preset::Noisy => SceneSpec::noisy(),
        }
    }
}

/// Starts from `base` and applies dotted-key overrides.
pub fn scene_spec(base: SceneSpec, seed: Option<u64>, overrides: &[(String, Value)]) -> Result<SceneSpec> {
    let mut spec = base;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if overrides.is_empty() {
        return Ok(spec);
    }
    let mut value = serde_json::to_value(&spec)?;
    for (key, v) in overrides {
        apply_override(&mut value, key, v.clone())?;
    }
    serde_json::from_value(value).context("applying scene overrides")
}

pub fn read_scene_spec(path: &Path) -> Result<SceneSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Pipeline config for a scene written to a directory; paths are relative to it.
pub fn scene_config(spec: &SceneSpec) -> PipelineConfig {
    PipelineConfig {
        views: spec
            .views
            .iter()
            .map(|v| ViewConfig {
                id: v.id.clone(),
                poses: PathBuf::from(pose_file_name(&v.id)),
                fps: v.fps,
                width: v.width,
                height: v.height,
                frames_dir: None,
                face_boxes: None,
            })
            .collect(),
        agent: AgentConfig {
            fixtures: Some(PathBuf::from(".")),
            http: None,
        },
        output_dir: PathBuf::from("out"),
        preproc: PreprocConfig {
            enabled: false,
            ..PreprocConfig::default()
        },
        sync: Default::default(),
        track: Default::default(),
        lift: Default::default(),
        angles: AnglesConfig {
            reference_dir: Some(PathBuf::from(TRUTH_DIR)),
            ..AnglesConfig::default()
        },
    }
}

/// Generates the scene into `out` and returns the config path.
pub fn synthesize(spec: &SceneSpec, out: &Path) -> Result<PathBuf> {
    let scene = generate(spec)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_scene(&scene, out)?;
    let path = out.join(CONFIG_FILE);
    write_json(&path, &scene_config(spec))?;
    Ok(path)
}
