//! File formats of the pipeline artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jointsync_core::kinematics::MetricReport;
use jointsync_core::model::{AngleSample, BBox, Joint3D};
use jointsync_core::stereo::LiftedFrame;
use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const PREPROC_DIR: &str = "preproc";
pub const SYNC_FILE: &str = "sync.json";
pub const JOINTS_FILE: &str = "joints3d.jsonl";
pub const GEOMETRY_FILE: &str = "geometry.json";
pub const METRICS_FILE: &str = "metrics.json";

pub fn track_file(view: &str) -> String {
    format!("track_{view}.json")
}

pub fn angles_file(triple: &str) -> String {
    format!("angles_{triple}.csv")
}

pub fn plot_file(triple: &str) -> String {
    format!("plot_{triple}.svg")
}

pub fn frame_file(frame: usize) -> String {
    format!("frame_{frame:06}.ppm")
}

pub fn preproc_dir(out: &Path, view: &str) -> PathBuf {
    out.join(PREPROC_DIR).join(view)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One line of `joints3d.jsonl`; invalid joints are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedRecord {
    pub frame_a: usize,
    pub frame_b: usize,
    pub timestamp_ms: Option<i64>,
    pub joints: Vec<Option<[f64; 3]>>,
}

impl From<&LiftedFrame> for LiftedRecord {
    fn from(f: &LiftedFrame) -> Self {
        Self {
            frame_a: f.frame_a,
            frame_b: f.frame_b,
            timestamp_ms: f.timestamp_ms,
            joints: f.joints.iter().map(|j| j.position().map(|p| [p.x, p.y, p.z])).collect(),
        }
    }
}

impl LiftedRecord {
    pub fn skeleton(&self) -> Vec<Joint3D<f64>> {
        self.joints
            .iter()
            .map(|j| j.map_or_else(Joint3D::invalid, |[x, y, z]| Joint3D::new(Vector3::new(x, y, z))))
            .collect()
    }
}

pub fn write_lifted(path: &Path, frames: &[LiftedFrame]) -> Result<()> {
    let mut text = String::new();
    for f in frames {
        text.push_str(&serde_json::to_string(&LiftedRecord::from(f))?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_lifted(path: &Path) -> Result<Vec<LiftedRecord>> {
    read_jsonl(path)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct FaceBoxRecord {
    frame: usize,
    boxes: Vec<[f64; 4]>,
}

/// Face boxes by frame from a JSONL file.
pub fn read_face_boxes(path: &Path) -> Result<std::collections::BTreeMap<usize, Vec<BBox>>> {
    let mut out = std::collections::BTreeMap::<usize, Vec<BBox>>::new();
    for r in read_jsonl::<FaceBoxRecord>(path)? {
        out.entry(r.frame)
            .or_default()
            .extend(r.boxes.iter().map(|b| BBox::new(b[0], b[1], b[2], b[3])));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct AngleRow {
    timestamp_ms: i64,
    angle_deg: Option<f64>,
}

/// `timestamp_ms,angle_deg` with an empty field for undefined angles.
pub fn write_angles(path: &Path, series: &[AngleSample]) -> Result<()> {
    let mut text = String::from("timestamp_ms,angle_deg\n");
    for s in series {
        match s.angle_deg {
            Some(a) => writeln!(text, "{},{a}", s.timestamp_ms)?,
            None => writeln!(text, "{},", s.timestamp_ms)?,
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_angles(path: &Path) -> Result<Vec<AngleSample>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["timestamp_ms", "angle_deg"] {
        bail!("{}: expected header timestamp_ms,angle_deg", path.display());
    }
    reader
        .deserialize()
        .map(|row| {
            let row: AngleRow = row.with_context(|| format!("parsing {}", path.display()))?;
            Ok(AngleSample {
                timestamp_ms: row.timestamp_ms,
                angle_deg: row.angle_deg,
            })
        })
        .collect()
}

/// Per-triple entry of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleMetrics {
    pub name: String,
    pub samples: usize,
    pub valid: usize,
    pub range_est: Option<(f64, f64)>,
    pub comparison: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub max_gap_ms: i64,
    pub triples: Vec<TripleMetrics>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_round_trip_with_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let series = vec![
            AngleSample {
                timestamp_ms: 10,
                angle_deg: Some(91.25),
            },
            AngleSample {
                timestamp_ms: 43,
                angle_deg: None,
            },
        ];
        write_angles(&path, &series).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "timestamp_ms,angle_deg\n10,91.25\n43,\n"
        );
        assert_eq!(read_angles(&path).unwrap(), series);
    }

    #[test]
    fn lifted_records_keep_invalid_joints() {
        let frame = LiftedFrame {
            frame_a: 3,
            frame_b: 5,
            timestamp_ms: Some(1000),
            joints: vec![Joint3D::new(Vector3::new(1.0, 2.0, 3.0)), Joint3D::invalid()],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(JOINTS_FILE);
        write_lifted(&path, std::slice::from_ref(&frame)).unwrap();
        let back = read_lifted(&path).unwrap();
        assert_eq!(back[0].joints, vec![Some([1.0, 2.0, 3.0]), None]);
        assert_eq!(back[0].skeleton(), frame.joints);
    }
}
