//! Stage sequencing and artifact persistence.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use jointsync_core::agent::{
    query_targets, render_indexed_poses, AgentBackend, AgentImage, FixtureBackend, HttpBackend, TargetQuery,
    TargetRender,
};
use jointsync_core::kinematics::{angle_range, angle_series, compare};
use jointsync_core::model::{load_pose_jsonl, Joint3D, PoseTensor};
use jointsync_core::preproc::{blur_boxes, clahe, gray_world, read_ppm, write_ppm};
use jointsync_core::stereo::{lift_sequence, Geometry, LiftInput, ViewInput};
use jointsync_core::sync::{align_views, synchronize_video, SyncMap};
use jointsync_core::track::{sample_anchor_frames, track, TrackResult};
use log::{info, warn};

use crate::artifacts::{
    angles_file, frame_file, plot_file, preproc_dir, read_angles, read_face_boxes, read_json, read_lifted, track_file,
    write_angles, write_json, write_lifted, MetricsFile, TripleMetrics, GEOMETRY_FILE, JOINTS_FILE, METRICS_FILE,
    SYNC_FILE,
};
use crate::config::{PipelineConfig, ViewConfig};
use crate::plot::render_svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Preproc,
    Sync,
    Track,
    Lift,
    Angles,
    Metrics,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Preproc,
        Stage::Sync,
        Stage::Track,
        Stage::Lift,
        Stage::Angles,
        Stage::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preproc => "preproc",
            Stage::Sync => "sync",
            Stage::Track => "track",
            Stage::Lift => "lift",
            Stage::Angles => "angles",
            Stage::Metrics => "metrics",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stages to run, in pipeline order; empty runs all.
    pub stages: Vec<Stage>,
    /// Skip leading stages whose outputs already exist and parse.
    pub resume: bool,
}

/// What happened to each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Resumed,
    NothingToDo,
}

pub struct Pipeline<'a> {
    config: &'a PipelineConfig,
    poses: OnceLock<Vec<PoseTensor>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a PipelineConfig) -> Self {
        Self {
            config,
            poses: OnceLock::new(),
        }
    }

    fn out(&self) -> &Path {
        &self.config.output_dir
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }

    /// Runs the selected stages in order, stopping at the first failure.
    /// Artifacts of completed stages are kept.
    pub fn run(&self, options: &RunOptions) -> Result<Vec<(Stage, StageOutcome)>, StageError> {
        let selected: Vec<Stage> = if options.stages.is_empty() {
            Stage::ALL.to_vec()
        } else {
            let mut s = options.stages.clone();
            s.sort();
            s.dedup();
            s
        };
        let mut outcomes = Vec::new();
        // once a stage reruns, later outputs are stale
        let mut rerun = false;
        for stage in selected {
            let fail = |source: anyhow::Error| StageError { stage, source };
            fs::create_dir_all(self.out())
                .with_context(|| format!("creating {}", self.out().display()))
                .map_err(fail)?;
            let outcome = if options.resume && !rerun && self.outputs_valid(stage) {
                info!("{stage}: outputs present, skipping");
                StageOutcome::Resumed
            } else {
                info!("{stage}: running");
                let outcome = self.run_stage(stage).map_err(fail)?;
                rerun |= outcome == StageOutcome::Ran;
                outcome
            };
            outcomes.push((stage, outcome));
        }
        Ok(outcomes)
    }

    fn run_stage(&self, stage: Stage) -> Result<StageOutcome> {
        match stage {
            Stage::Preproc => self.preproc(),
            Stage::Sync => self.sync().map(|_| StageOutcome::Ran),
            Stage::Track => self.track().map(|_| StageOutcome::Ran),
            Stage::Lift => self.lift().map(|_| StageOutcome::Ran),
            Stage::Angles => self.angles().map(|_| StageOutcome::Ran),
            Stage::Metrics => self.metrics().map(|_| StageOutcome::Ran),
        }
    }

    fn outputs_valid(&self, stage: Stage) -> bool {
        let check = || -> Result<()> {
            match stage {
                Stage::Preproc => {
                    for v in &self.config.views {
                        for (frame, _) in input_frames(v)? {
                            read_ppm(&preproc_dir(self.out(), &v.id).join(frame_file(frame)))?;
                        }
                    }
                }
                Stage::Sync => {
                    let map: SyncMap = read_json(&self.out_file(SYNC_FILE))?;
                    for v in &self.config.views {
                        map.clocks(&v.id).ok_or_else(|| anyhow!("no clocks for {}", v.id))?;
                    }
                }
                Stage::Track => {
                    for v in &self.config.views {
                        read_json::<TrackResult>(&self.out_file(&track_file(&v.id)))?;
                    }
                }
                Stage::Lift => {
                    read_lifted(&self.out_file(JOINTS_FILE))?;
                    read_json::<Geometry>(&self.out_file(GEOMETRY_FILE))?;
                }
                Stage::Angles => {
                    for t in &self.config.angles.triples {
                        read_angles(&self.out_file(&angles_file(&t.name)))?;
                    }
                }
                Stage::Metrics => {
                    let m: MetricsFile = read_json(&self.out_file(METRICS_FILE))?;
                    for t in m.triples.iter().filter(|t| t.valid > 0) {
                        if !self.out_file(&plot_file(&t.name)).is_file() {
                            bail!("missing plot for {}", t.name);
                        }
                    }
                }
            }
            Ok(())
        };
        check().is_ok()
    }

    fn poses(&self) -> Result<&[PoseTensor]> {
        if let Some(p) = self.poses.get() {
            return Ok(p);
        }
        let loaded = self
            .config
            .views
            .iter()
            .map(|v| load_pose_jsonl(&v.poses).with_context(|| format!("loading poses of view {}", v.id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.poses.get_or_init(|| loaded))
    }

    fn backend(&self) -> Result<Box<dyn AgentBackend>> {
        let agent = &self.config.agent;
        Ok(match (&agent.fixtures, &agent.http) {
            (Some(dir), _) => Box::new(FixtureBackend::load(dir).context("loading agent fixtures")?),
            (None, Some(http)) => Box::new(HttpBackend::new(http.clone()).context("creating HTTP agent")?),
            (None, None) => bail!("no agent backend configured"),
        })
    }

    /// Frame images for agent queries: preprocessed frames when present,
    /// otherwise raw frames, otherwise none.
    fn image(&self, view: &ViewConfig, frame: usize) -> Option<AgentImage> {
        let processed = preproc_dir(self.out(), &view.id).join(frame_file(frame));
        if self.config.preproc.enabled {
            if let Ok(img) = read_ppm(&processed) {
                return Some(AgentImage::anonymized(img));
            }
        }
        let dir = view.frames_dir.as_ref()?;
        read_ppm(&dir.join(frame_file(frame))).ok().map(AgentImage::raw)
    }

    fn preproc(&self) -> Result<StageOutcome> {
        let p = &self.config.preproc;
        if !p.enabled {
            info!("preproc: disabled");
            return Ok(StageOutcome::NothingToDo);
        }
        let mut any = false;
        for v in &self.config.views {
            let frames = input_frames(v)?;
            if frames.is_empty() {
                continue;
            }
            any = true;
            let faces = match &v.face_boxes {
                Some(path) => read_face_boxes(path)?,
                None => {
                    warn!("view {}: no face boxes, frames are not blurred", v.id);
                    Default::default()
                }
            };
            let dir = preproc_dir(self.out(), &v.id);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for (frame, path) in frames {
                let mut img = read_ppm(&path)?;
                if let Some(boxes) = faces.get(&frame) {
                    img = blur_boxes(&img, boxes, p.blur_sigma);
                }
                let img = clahe(&gray_world(&img), p.clahe);
                write_ppm(&img, &dir.join(frame_file(frame)))?;
            }
        }
        Ok(if any {
            StageOutcome::Ran
        } else {
            StageOutcome::NothingToDo
        })
    }

    fn sync(&self) -> Result<SyncMap> {
        let backend = self.backend()?;
        let poses = self.poses()?;
        let mut views = Vec::new();
        for (v, tensor) in self.config.views.iter().zip(poses) {
            let images = |f: usize| self.image(v, f);
            let sync = synchronize_video(
                &*backend,
                &v.id,
                tensor.frame_count(),
                v.fps,
                &self.config.sync,
                &images,
            )
            .with_context(|| format!("view {}", v.id))?;
            if !sync.validation.passed {
                warn!(
                    "view {}: validation failed, max error {:.1} ms",
                    v.id, sync.validation.max_error_ms
                );
            }
            views.push(sync);
        }
        let pairing = align_views(&views[0].clocks, &views[1].clocks);
        let map = SyncMap { views, pairing };
        write_json(&self.out_file(SYNC_FILE), &map)?;
        Ok(map)
    }

    fn track(&self) -> Result<()> {
        let backend = self.backend()?;
        let poses = self.poses()?;
        let cfg = &self.config.track;
        let backend = &*backend;
        let results: Vec<Result<TrackResult>> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .config
                .views
                .iter()
                .zip(poses)
                .map(|(v, tensor)| {
                    s.spawn(move || {
                        let anchors = sample_anchor_frames(tensor, cfg.anchor_budget(tensor.frame_count()), cfg);
                        let renders = anchors
                            .iter()
                            .map(|&f| {
                                let persons = tensor.frame(f).map_or(&[][..], |p| &p.persons);
                                let image = self.image(v, f).map(|img| {
                                    let drawn = render_indexed_poses(img.raster(), persons, cfg.conf_threshold);
                                    if img.is_anonymized() {
                                        AgentImage::anonymized(drawn)
                                    } else {
                                        AgentImage::raw(drawn)
                                    }
                                });
                                TargetRender {
                                    frame_index: f,
                                    person_count: tensor.frame(f).map_or(0, |p| p.detected()),
                                    image,
                                }
                            })
                            .collect();
                        let query = TargetQuery {
                            video_id: v.id.clone(),
                            renders,
                        };
                        let reply = query_targets(backend, &query).with_context(|| format!("view {}", v.id))?;
                        let result = track(tensor, &reply, cfg).with_context(|| format!("view {}", v.id))?;
                        info!(
                            "view {}: {} anchors, {} of {} frames missing",
                            v.id,
                            anchors.len(),
                            result.missing_count(),
                            result.frames.len()
                        );
                        Ok(result)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("tracking thread panicked"))
                .collect()
        });
        for (v, r) in self.config.views.iter().zip(results) {
            write_json(&self.out_file(&track_file(&v.id)), &r?)?;
        }
        Ok(())
    }

    fn lift(&self) -> Result<()> {
        let poses = self.poses()?;
        let sync: SyncMap = read_json(&self.out_file(SYNC_FILE))?;
        let views = &self.config.views;
        let tracks = views
            .iter()
            .map(|v| read_json::<TrackResult>(&self.out_file(&track_file(&v.id))))
            .collect::<Result<Vec<_>>>()?;
        let clocks_a = sync
            .clocks(&views[0].id)
            .ok_or_else(|| anyhow!("{SYNC_FILE} has no clocks for view {}", views[0].id))?;
        let input = |i: usize| ViewInput {
            poses: &poses[i],
            track: &tracks[i],
            width: f64::from(views[i].width),
            height: f64::from(views[i].height),
        };
        let lifted = lift_sequence(
            &LiftInput {
                a: input(0),
                b: input(1),
                pairing: &sync.pairing,
                clocks_a,
            },
            &self.config.lift,
        )?;
        let g = &lifted.geometry;
        info!(
            "lift: {} inliers of {} correspondences, loss {:.4} -> {:.4}",
            g.inliers, g.correspondences, g.initial_loss, g.final_loss
        );
        write_lifted(&self.out_file(JOINTS_FILE), &lifted.frames)?;
        write_json(&self.out_file(GEOMETRY_FILE), &lifted.geometry)
    }

    fn angles(&self) -> Result<()> {
        let records = read_lifted(&self.out_file(JOINTS_FILE))?;
        let skeletons: Vec<(i64, Vec<Joint3D<f64>>)> = records
            .iter()
            .filter_map(|r| Some((r.timestamp_ms?, r.skeleton())))
            .collect();
        let joints = records.first().map_or(0, |r| r.joints.len());
        for triple in &self.config.angles.triples {
            if joints > 0 {
                triple.validate(joints)?;
            }
            let series = angle_series(skeletons.iter().map(|(t, j)| (*t, j.as_slice())), triple);
            write_angles(&self.out_file(&angles_file(&triple.name)), &series)?;
        }
        Ok(())
    }

    fn metrics(&self) -> Result<()> {
        let a = &self.config.angles;
        let mut triples = Vec::new();
        for triple in &a.triples {
            let name = &triple.name;
            let est = read_angles(&self.out_file(&angles_file(name)))?;
            let values: Vec<Option<f64>> = est.iter().map(|s| s.angle_deg).collect();
            let reference = match &a.reference_dir {
                Some(dir) => {
                    let path = dir.join(angles_file(name));
                    if path.is_file() {
                        Some(read_angles(&path)?)
                    } else {
                        warn!("{name}: no reference series at {}", path.display());
                        None
                    }
                }
                None => None,
            };
            let comparison = reference.as_ref().and_then(|r| match compare(&est, r, a.max_gap_ms) {
                Ok(m) => Some(m),
                Err(e) => {
                    warn!("{name}: not compared: {e}");
                    None
                }
            });
            let valid = values.iter().flatten().count();
            if valid > 0 {
                let svg = render_svg(&est, reference.as_deref(), name)?;
                let path = self.out_file(&plot_file(name));
                fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
            }
            triples.push(TripleMetrics {
                name: name.clone(),
                samples: est.len(),
                valid,
                range_est: angle_range(&values).ok(),
                comparison,
            });
        }
        write_json(
            &self.out_file(METRICS_FILE),
            &MetricsFile {
                max_gap_ms: a.max_gap_ms,
                triples,
            },
        )
    }
}

/// `frame_XXXXXX.ppm` files of the view's frames directory, by frame index.
fn input_frames(view: &ViewConfig) -> Result<Vec<(usize, PathBuf)>> {
    let Some(dir) = &view.frames_dir else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(index) = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix(".ppm"))
            .and_then(|s| s.parse().ok())
        {
            out.push((index, path));
        }
    }
    out.sort();
    Ok(out)
}
