use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AgentBackend, AgentError, TargetChoice, TargetQuery, TimestampQuery, TimestampReply};

/// Timestamp replies, one prompt-format JSON object per line.
pub const TIMESTAMPS_FILE: &str = "timestamps.jsonl";
/// Per-frame target replies, one [`TargetRecord`] per line.
pub const TARGETS_FILE: &str = "targets.jsonl";

/// One line of the target fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub video: String,
    pub frame: usize,
    pub index: i32,
}

/// Replays recorded replies keyed by `(video, frame)`.
///
/// Timestamp payloads are returned byte-for-byte as stored; target payloads
/// are assembled from the per-frame records in query order.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    timestamps: HashMap<(String, usize), String>,
    targets: HashMap<(String, usize), i32>,
}

impl FixtureBackend {
    /// Loads `timestamps.jsonl` and `targets.jsonl` from `dir`; either file may be absent.
    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let mut backend = Self::default();
        let ts_path = dir.join(TIMESTAMPS_FILE);
        if ts_path.exists() {
            for (line_no, line) in read_lines(&ts_path)? {
                let key: KeyOnly = serde_json::from_str(&line).map_err(|e| fixture_err(&ts_path, line_no, e))?;
                backend.timestamps.insert((key.video, key.frame), line);
            }
        }
        let tg_path = dir.join(TARGETS_FILE);
        if tg_path.exists() {
            for (line_no, line) in read_lines(&tg_path)? {
                let rec: TargetRecord = serde_json::from_str(&line).map_err(|e| fixture_err(&tg_path, line_no, e))?;
                backend.targets.insert((rec.video, rec.frame), rec.index);
            }
        }
        Ok(backend)
    }

    pub fn insert_timestamp_payload(&mut self, video: &str, frame: usize, payload: String) {
        self.timestamps.insert((video.to_owned(), frame), payload);
    }

    pub fn insert_target(&mut self, video: &str, frame: usize, index: i32) {
        self.targets.insert((video.to_owned(), frame), index);
    }
}

#[derive(Deserialize)]
struct KeyOnly {
    video: String,
    frame: usize,
}

fn fixture_err(path: &Path, line: usize, e: serde_json::Error) -> AgentError {
    AgentError::Fixture {
        path: path.display().to_string(),
        message: format!("line {line}: {e}"),
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, AgentError> {
    let text = fs::read_to_string(path).map_err(|e| AgentError::Fixture {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_owned()))
        .collect())
}

impl AgentBackend for FixtureBackend {
    fn timestamp_payload(&self, query: &TimestampQuery, _attempt: u32) -> Result<String, AgentError> {
        self.timestamps
            .get(&(query.video_id.clone(), query.frame_index))
            .cloned()
            .ok_or_else(|| AgentError::FixtureMissing {
                video: query.video_id.clone(),
                frame: query.frame_index,
            })
    }

    fn target_payload(&self, query: &TargetQuery, _attempt: u32) -> Result<String, AgentError> {
        let mut targets = Vec::with_capacity(query.renders.len());
        for r in &query.renders {
            let index = *self
                .targets
                .get(&(query.video_id.clone(), r.frame_index))
                .ok_or_else(|| AgentError::FixtureMissing {
                    video: query.video_id.clone(),
                    frame: r.frame_index,
                })?;
            targets.push(TargetChoice {
                frame_index: r.frame_index,
                index,
            });
        }
        Ok(serde_json::json!({ "video": query.video_id, "targets": targets }).to_string())
    }
}

/// Appends replies to fixture files so a live session can be replayed.
#[derive(Debug)]
pub struct FixtureRecorder {
    dir: PathBuf,
    lock: Mutex<()>,
}

impl FixtureRecorder {
    pub fn new(dir: &Path) -> Result<Self, AgentError> {
        fs::create_dir_all(dir).map_err(|e| AgentError::Fixture {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self {
            dir: dir.to_owned(),
            lock: Mutex::new(()),
        })
    }

    pub fn record_timestamp_payload(&self, payload: &str) -> Result<(), AgentError> {
        let line: String = payload.lines().map(str::trim).collect::<Vec<_>>().join(" ");
        self.append(TIMESTAMPS_FILE, &line)
    }

    pub fn record_timestamp(&self, reply: &TimestampReply) -> Result<(), AgentError> {
        self.append(TIMESTAMPS_FILE, &reply.to_payload())
    }

    pub fn record_target(&self, record: &TargetRecord) -> Result<(), AgentError> {
        self.append(TARGETS_FILE, &serde_json::to_string(record).expect("record serializes"))
    }

    fn append(&self, file: &str, line: &str) -> Result<(), AgentError> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.dir.join(file);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| AgentError::Fixture {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        writeln!(f, "{line}").map_err(|e| AgentError::Fixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{query_targets, query_timestamp, TargetRender};

    fn reply(frame: usize, ts: Option<&str>) -> TimestampReply {
        TimestampReply {
            video_id: "v.mp4".into(),
            frame_index: frame,
            detected: ts.is_some(),
            timestamp_raw: ts.map(str::to_owned),
            note: String::new(),
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = FixtureRecorder::new(dir.path()).unwrap();
        rec.record_timestamp(&reply(0, Some("00:00:01.000"))).unwrap();
        rec.record_timestamp(&reply(5, None)).unwrap();
        for (frame, index) in [(0, 0), (10, 1), (20, -1)] {
            rec.record_target(&TargetRecord {
                video: "v.mp4".into(),
                frame,
                index,
            })
            .unwrap();
        }
        let backend = FixtureBackend::load(dir.path()).unwrap();
        let q = |frame| TimestampQuery {
            video_id: "v.mp4".into(),
            frame_index: frame,
            frame_count: 30,
            image: None,
        };
        assert_eq!(query_timestamp(&backend, &q(0)).unwrap().timestamp_ms(), Some(1000));
        assert!(!query_timestamp(&backend, &q(5)).unwrap().detected);
        assert!(matches!(
            query_timestamp(&backend, &q(6)),
            Err(AgentError::FixtureMissing { .. })
        ));

        let tq = TargetQuery {
            video_id: "v.mp4".into(),
            renders: [0, 10, 20]
                .iter()
                .map(|&f| TargetRender {
                    frame_index: f,
                    person_count: 2,
                    image: None,
                })
                .collect(),
        };
        assert_eq!(query_targets(&backend, &tq).unwrap().indices(), vec![0, 1, -1]);
    }

    #[test]
    fn replies_are_byte_identical() {
        let mut backend = FixtureBackend::default();
        backend.insert_timestamp_payload("v", 1, "{\"video\":\"v\",\"frame\":1}".into());
        let q = TimestampQuery {
            video_id: "v".into(),
            frame_index: 1,
            frame_count: 2,
            image: None,
        };
        let a = backend.timestamp_payload(&q, 0).unwrap();
        let b = backend.timestamp_payload(&q, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_target_fixture() {
        let mut backend = FixtureBackend::default();
        for f in 0..5 {
            backend.insert_target("v", f, 0);
        }
        let tq = TargetQuery {
            video_id: "v".into(),
            renders: (0..5)
                .map(|f| TargetRender {
                    frame_index: f,
                    person_count: 1,
                    image: None,
                })
                .collect(),
        };
        assert_eq!(query_targets(&backend, &tq).unwrap().indices(), vec![0; 5]);
    }
}
