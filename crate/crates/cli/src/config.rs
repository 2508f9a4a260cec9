//! Pipeline configuration: one JSON file plus `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use jointsync_core::agent::HttpConfig;
use jointsync_core::kinematics::{default_triples, JointTriple, DEFAULT_MAX_GAP_MS};
use jointsync_core::preproc::{ClaheParams, DEFAULT_BLUR_SIGMA};
use jointsync_core::stereo::LiftConfig;
use jointsync_core::sync::SyncParams;
use jointsync_core::track::TrackConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid override {0:?}: {1}")]
    Override(String, String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// One camera's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewConfig {
    pub id: String,
    /// Pose JSONL file.
    pub poses: PathBuf,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    /// Directory of per-frame PPM images named with their frame index.
    #[serde(default)]
    pub frames_dir: Option<PathBuf>,
    /// JSONL face boxes, `{"frame": int, "boxes": [[x0, y0, x1, y1], ...]}` per line.
    #[serde(default)]
    pub face_boxes: Option<PathBuf>,
}

/// Exactly one of `fixtures` and `http` selects the agent backend.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub fixtures: Option<PathBuf>,
    pub http: Option<HttpConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocConfig {
    pub enabled: bool,
    pub clahe: ClaheParams,
    pub blur_sigma: f64,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            clahe: ClaheParams::default(),
            blur_sigma: DEFAULT_BLUR_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnglesConfig {
    pub triples: Vec<JointTriple>,
    pub max_gap_ms: i64,
    /// Directory with reference series `angles_<triple>.csv`.
    pub reference_dir: Option<PathBuf>,
}

impl Default for AnglesConfig {
    fn default() -> Self {
        Self {
            triples: default_triples(),
            max_gap_ms: DEFAULT_MAX_GAP_MS,
            reference_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub views: Vec<ViewConfig>,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub preproc: PreprocConfig,
    #[serde(default)]
    pub sync: SyncParams,
    #[serde(default)]
    pub track: TrackConfig,
    #[serde(default)]
    pub lift: LiftConfig,
    #[serde(default)]
    pub angles: AnglesConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Parses a `key=value` override. The value is read as JSON and falls back
/// to a plain string.
pub fn parse_override(arg: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(arg.to_owned(), "expected key=value".into()))?;
    if key.is_empty() {
        return Err(ConfigError::Override(arg.to_owned(), "empty key".into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    Ok((key.to_owned(), value))
}

/// Sets the dotted `key` in `root`. Every segment must already exist, so
/// misspelled keys are rejected; array elements are addressed by index.
pub fn apply_override(root: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut node = root;
    for segment in key.split('.') {
        let fail = || ConfigError::Override(key.to_owned(), format!("no setting named {segment:?}"));
        node = match node {
            Value::Object(map) => map.get_mut(segment).ok_or_else(fail)?,
            Value::Array(items) => {
                let i: usize = segment.parse().map_err(|_| fail())?;
                items.get_mut(i).ok_or_else(fail)?
            }
            _ => return Err(fail()),
        };
    }
    *node = value;
    Ok(())
}

impl PipelineConfig {
    /// Reads a config file, applies overrides and resolves relative paths
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let read_err = |message: String| ConfigError::Read {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let raw: Value = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        let parsed: Self = serde_json::from_value(raw.clone()).map_err(|e| read_err(e.to_string()))?;
        let expanded = serde_json::to_value(&parsed).expect("config serializes");
        let mut unknown = Vec::new();
        unknown_keys(&raw, &expanded, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(read_err(format!("unknown settings: {}", unknown.join(", "))));
        }
        let mut config = parsed.with_overrides(overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    /// Applies overrides against the fully expanded configuration.
    pub fn with_overrides(&self, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut value = serde_json::to_value(self).expect("config serializes");
        for (key, v) in overrides {
            apply_override(&mut value, key, v.clone())?;
        }
        serde_json::from_value(value).map_err(|e| ConfigError::Override(describe(overrides), e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for v in &mut self.views {
            join(&mut v.poses);
            v.frames_dir.as_mut().map(join);
            v.face_boxes.as_mut().map(join);
        }
        self.agent.fixtures.as_mut().map(join);
        if let Some(dir) = self.agent.http.as_mut().and_then(|h| h.record_dir.as_mut()) {
            join(dir);
        }
        self.angles.reference_dir.as_mut().map(join);
        join(&mut self.output_dir);
    }

    /// Selects the fixture backend, dropping any HTTP settings.
    pub fn use_fixtures(&mut self, dir: PathBuf) {
        self.agent = AgentConfig {
            fixtures: Some(dir),
            http: None,
        };
    }

    /// Checks referenced paths and parameter ranges.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        check(
            self.views.len() == 2,
            format!("exactly two views required, got {}", self.views.len()),
        );
        if self.views.len() == 2 {
            check(self.views[0].id != self.views[1].id, "view ids must differ".into());
        }
        for v in &self.views {
            let id = &v.id;
            check(
                !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
                format!("view id {id:?} must be non-empty and use only [A-Za-z0-9_-]"),
            );
            check(
                v.poses.is_file(),
                format!("view {id}: pose file {} not found", v.poses.display()),
            );
            check(
                v.fps > 0.0 && v.fps.is_finite(),
                format!("view {id}: fps must be positive"),
            );
            check(
                v.width > 0 && v.height > 0,
                format!("view {id}: image size must be positive"),
            );
            if let Some(d) = &v.frames_dir {
                check(
                    d.is_dir(),
                    format!("view {id}: frames directory {} not found", d.display()),
                );
            }
            if let Some(f) = &v.face_boxes {
                check(
                    f.is_file(),
                    format!("view {id}: face box file {} not found", f.display()),
                );
            }
        }
        match (&self.agent.fixtures, &self.agent.http) {
            (Some(dir), None) => check(dir.is_dir(), format!("fixture directory {} not found", dir.display())),
            (None, Some(http)) => {
                check(!http.url.is_empty(), "agent.http.url is empty".into());
                check(
                    http.max_in_flight >= 1,
                    "agent.http.max_in_flight must be at least 1".into(),
                );
                check(http.timeout_s > 0.0, "agent.http.timeout_s must be positive".into());
                check(
                    self.views.iter().all(|v| v.frames_dir.is_some()),
                    "the HTTP agent needs frames_dir for every view".into(),
                );
            }
            _ => check(false, "set exactly one of agent.fixtures and agent.http".into()),
        }
        if let Some(d) = &self.angles.reference_dir {
            check(d.is_dir(), format!("reference directory {} not found", d.display()));
        }

        let unit = |v: f64| v > 0.0 && v <= 1.0;
        let s = &self.sync;
        check(s.initial_budget >= 2, "sync.initial_budget must be at least 2".into());
        check(
            unit(s.tol_period_fraction),
            "sync.tol_period_fraction must lie in (0, 1]".into(),
        );
        check(
            s.validation_tol_ms > 0.0,
            "sync.validation_tol_ms must be positive".into(),
        );

        let t = &self.track;
        check(unit(t.conf_threshold), "track.conf_threshold must lie in (0, 1]".into());
        check(
            t.min_valid_joints >= 2,
            "track.min_valid_joints must be at least 2".into(),
        );
        check(
            (0.0..=1.0).contains(&t.iou_gate),
            "track.iou_gate must lie in [0, 1]".into(),
        );
        check(t.warmup >= 1, "track.warmup must be at least 1".into());
        check(
            t.frames_per_anchor >= 1,
            "track.frames_per_anchor must be at least 1".into(),
        );
        let k = &t.kalman;
        check(
            [
                k.process_pos,
                k.process_vel,
                k.measurement,
                k.initial_pos,
                k.initial_vel,
            ]
            .iter()
            .all(|v| *v > 0.0),
            "track.kalman variances must be positive".into(),
        );

        let l = &self.lift;
        check(unit(l.conf_threshold), "lift.conf_threshold must lie in (0, 1]".into());
        check(
            l.focal_scale > 0.0 && l.focal_scale.is_finite(),
            "lift.focal_scale must be positive".into(),
        );
        check(l.ransac.tau > 0.0, "lift.ransac.tau must be positive".into());
        check(
            l.ransac.max_iterations >= 1,
            "lift.ransac.max_iterations must be at least 1".into(),
        );
        check(
            l.ransac.confidence > 0.0 && l.ransac.confidence < 1.0,
            "lift.ransac.confidence must lie in (0, 1)".into(),
        );
        check(
            l.residual_gate_px > 0.0,
            "lift.residual_gate_px must be positive".into(),
        );
        let b = &l.bundle;
        check(
            b.lambda_rep >= 0.0 && b.lambda_epi >= 0.0,
            "lift.bundle weights must be non-negative".into(),
        );
        check(
            b.huber_px > 0.0 && b.learning_rate > 0.0,
            "lift.bundle huber_px and learning_rate must be positive".into(),
        );
        check(
            (0.0..=1.0).contains(&b.final_lr_fraction),
            "lift.bundle.final_lr_fraction must lie in [0, 1]".into(),
        );
        check(
            (0.0..1.0).contains(&b.beta1) && (0.0..1.0).contains(&b.beta2),
            "lift.bundle betas must lie in [0, 1)".into(),
        );
        check(b.epsilon > 0.0, "lift.bundle.epsilon must be positive".into());

        let a = &self.angles;
        check(!a.triples.is_empty(), "angles.triples is empty".into());
        check(a.max_gap_ms >= 0, "angles.max_gap_ms must be non-negative".into());
        for triple in &a.triples {
            if let Err(e) = triple.validate(usize::MAX) {
                problems.push(e.to_string());
            }
            let ok = !triple.name.is_empty()
                && triple
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                problems.push(format!("triple name {:?} must use only [A-Za-z0-9_-]", triple.name));
            }
        }
        let dedup: std::collections::BTreeSet<_> = a.triples.iter().map(|t| &t.name).collect();
        if dedup.len() != a.triples.len() {
            problems.push("triple names must be unique".into());
        }

        if self.preproc.enabled {
            let c = &self.preproc.clahe;
            if c.tiles_x == 0 || c.tiles_y == 0 || !(c.clip_limit > 0.0) {
                problems.push("preproc.clahe needs positive tiles and clip limit".into());
            }
            if !(self.preproc.blur_sigma > 0.0) {
                problems.push("preproc.blur_sigma must be positive".into());
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems.join("; ")))
        }
    }
}

/// Keys present in `raw` but absent from its parsed-and-reserialized form.
fn unknown_keys(raw: &Value, expanded: &Value, prefix: &str, out: &mut Vec<String>) {
    match (raw, expanded) {
        (Value::Object(r), Value::Object(e)) => {
            for (k, v) in r {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match e.get(k) {
                    Some(ev) => unknown_keys(v, ev, &path, out),
                    None => out.push(path),
                }
            }
        }
        (Value::Array(r), Value::Array(e)) => {
            for (i, (v, ev)) in r.iter().zip(e).enumerate() {
                unknown_keys(v, ev, &format!("{prefix}.{i}"), out);
            }
        }
        _ => {}
    }
}

fn describe(overrides: &[(String, Value)]) -> String {
    overrides
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}
