//! Client side of the multimodal agent.
//!
//! The agent answers two kinds of questions: which clock value is visible in
//! a frame, and which of the indexed persons in a set of rendered frames is
//! the primary subject. Backends only move payload strings; this module owns
//! prompt assembly, JSON extraction, validation and the single retry on a
//! malformed reply, so every reply handed downstream satisfies its type
//! invariants.

mod clock;
mod fixture;
mod http;
mod render;

pub use clock::{format_clock_string, parse_clock_string, ClockParseError};
pub use fixture::{FixtureBackend, FixtureRecorder, TargetRecord, TARGETS_FILE, TIMESTAMPS_FILE};
pub use http::{HttpBackend, HttpConfig, DEFAULT_TOKEN_ENV};
pub use render::{person_color, render_indexed_poses, LABEL_MARGIN};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::preproc::RasterImage;

/// Timestamp-reading prompt, version 1.
pub const TIMESTAMP_PROMPT: &str = include_str!("../../prompts/timestamp_v1.txt");
/// Target-identification prompt, version 1.
pub const TARGET_PROMPT: &str = include_str!("../../prompts/target_v1.txt");

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol violation: {message} (payload: {raw})")]
    Protocol { message: String, raw: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("refusing to send a frame that has not been anonymized")]
    NotAnonymized,
    #[error("no fixture reply for video {video} frame {frame}")]
    FixtureMissing { video: String, frame: usize },
    #[error("{path}: {message}")]
    Fixture { path: String, message: String },
}

impl AgentError {
    /// Whether repeating the same query may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, AgentError::Transport(_))
    }
}

/// A frame prepared for the agent. Only frames built through
/// [`AgentImage::anonymized`] may leave the machine.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentImage {
    raster: RasterImage,
    anonymized: bool,
}

impl AgentImage {
    /// Wraps a frame whose face regions have already been blurred.
    pub fn anonymized(raster: RasterImage) -> Self {
        Self {
            raster,
            anonymized: true,
        }
    }

    pub fn raw(raster: RasterImage) -> Self {
        Self {
            raster,
            anonymized: false,
        }
    }

    pub fn raster(&self) -> &RasterImage {
        &self.raster
    }

    pub fn is_anonymized(&self) -> bool {
        self.anonymized
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimestampQuery {
    pub video_id: String,
    pub frame_index: usize,
    /// Number of frames in the video, used to bound `frame_index`.
    pub frame_count: usize,
    pub image: Option<AgentImage>,
}

/// Parsed reply of the timestamp prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampReply {
    #[serde(rename = "video")]
    pub video_id: String,
    #[serde(rename = "frame")]
    pub frame_index: usize,
    pub detected: bool,
    #[serde(rename = "timestamp")]
    pub timestamp_raw: Option<String>,
    pub note: String,
}

impl TimestampReply {
    /// The reply in the JSON layout the timestamp prompt asks for.
    pub fn to_payload(&self) -> String {
        serde_json::to_string(self).expect("reply serializes")
    }

    /// Milliseconds since midnight, if a well-formed clock value was read.
    pub fn timestamp_ms(&self) -> Option<i64> {
        self.timestamp_raw.as_deref().and_then(|s| parse_clock_string(s).ok())
    }
}

/// One rendered frame of a target query.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRender {
    pub frame_index: usize,
    /// `N_t`: persons labeled `P0..P(N_t-1)` in the render.
    pub person_count: usize,
    pub image: Option<AgentImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetQuery {
    pub video_id: String,
    pub renders: Vec<TargetRender>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetChoice {
    #[serde(rename = "frame")]
    pub frame_index: usize,
    /// Chosen person, or `-1` when the subject is not visible.
    pub index: i32,
}

/// Per-frame target choices, in query order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TargetReply {
    pub choices: Vec<TargetChoice>,
}

impl TargetReply {
    pub fn index_at(&self, frame: usize) -> Option<i32> {
        self.choices.iter().find(|c| c.frame_index == frame).map(|c| c.index)
    }

    pub fn indices(&self) -> Vec<i32> {
        self.choices.iter().map(|c| c.index).collect()
    }
}

/// Source of raw agent payloads.
///
/// `attempt` is 0 for the first try and 1 for the re-query after a
/// malformed reply. Implementations must be safe to call concurrently.
pub trait AgentBackend: Send + Sync {
    fn timestamp_payload(&self, query: &TimestampQuery, attempt: u32) -> Result<String, AgentError>;
    fn target_payload(&self, query: &TargetQuery, attempt: u32) -> Result<String, AgentError>;
}

/// Asks the agent for the clock value visible in one frame.
pub fn query_timestamp(backend: &dyn AgentBackend, query: &TimestampQuery) -> Result<TimestampReply, AgentError> {
    if query.frame_index >= query.frame_count {
        return Err(AgentError::InvalidQuery(format!(
            "frame {} outside video of {} frames",
            query.frame_index, query.frame_count
        )));
    }
    with_retry(
        |attempt| backend.timestamp_payload(query, attempt),
        |payload| parse_timestamp_reply(payload, query),
    )
}

/// Asks the agent which person is the primary subject in each render.
pub fn query_targets(backend: &dyn AgentBackend, query: &TargetQuery) -> Result<TargetReply, AgentError> {
    if query.renders.is_empty() {
        return Err(AgentError::InvalidQuery("target query without renders".into()));
    }
    with_retry(
        |attempt| backend.target_payload(query, attempt),
        |payload| parse_target_reply(payload, query),
    )
}

fn with_retry<T>(
    mut fetch: impl FnMut(u32) -> Result<String, AgentError>,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, AgentError> {
    let mut last = None;
    for attempt in 0..2 {
        let payload = fetch(attempt)?;
        match parse(&payload) {
            Ok(v) => return Ok(v),
            Err(message) => {
                log::warn!("malformed agent reply on attempt {attempt}: {message}");
                last = Some((message, payload));
            }
        }
    }
    let (message, raw) = last.expect("two attempts recorded");
    Err(AgentError::Protocol { message, raw })
}

/// Returns the first balanced `{...}` in `text`, ignoring braces inside
/// JSON string literals.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in text[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_object(payload: &str) -> Result<serde_json::Map<String, Value>, String> {
    let obj = extract_json_object(payload).ok_or("no JSON object in reply")?;
    match serde_json::from_str::<Value>(obj) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err("reply is not a JSON object".into()),
        Err(e) => Err(format!("invalid JSON: {e}")),
    }
}

fn parse_timestamp_reply(payload: &str, query: &TimestampQuery) -> Result<TimestampReply, String> {
    let map = parse_object(payload)?;
    let video = map
        .get("video")
        .and_then(Value::as_str)
        .ok_or("missing string field `video`")?;
    let frame = map
        .get("frame")
        .and_then(Value::as_u64)
        .ok_or("missing integer field `frame`")?;
    let detected = map
        .get("detected")
        .and_then(Value::as_bool)
        .ok_or("missing boolean field `detected`")?;
    let timestamp = match map.get("timestamp") {
        Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        _ => return Err("field `timestamp` must be a string or null".into()),
    };
    let note = map
        .get("note")
        .and_then(Value::as_str)
        .ok_or("missing string field `note`")?;
    if video != query.video_id || frame as usize != query.frame_index {
        return Err(format!(
            "reply for {video}#{frame} does not match query {}#{}",
            query.video_id, query.frame_index
        ));
    }
    if !detected && timestamp.is_some() {
        return Err("timestamp reported although detection is false".into());
    }
    Ok(TimestampReply {
        video_id: video.to_owned(),
        frame_index: frame as usize,
        detected,
        timestamp_raw: timestamp,
        note: note.to_owned(),
    })
}

fn parse_target_reply(payload: &str, query: &TargetQuery) -> Result<TargetReply, String> {
    let map = parse_object(payload)?;
    let targets = map
        .get("targets")
        .and_then(Value::as_array)
        .ok_or("missing array field `targets`")?;
    let mut parsed = Vec::with_capacity(targets.len());
    for t in targets {
        let frame = t
            .get("frame")
            .and_then(Value::as_u64)
            .ok_or("target entry without integer `frame`")?;
        let index = t
            .get("index")
            .and_then(Value::as_i64)
            .ok_or("target entry without integer `index`")?;
        parsed.push((frame as usize, index));
    }
    let mut choices = Vec::with_capacity(query.renders.len());
    for render in &query.renders {
        let &(_, index) = parsed
            .iter()
            .find(|(f, _)| *f == render.frame_index)
            .ok_or_else(|| format!("no target for frame {}", render.frame_index))?;
        if index < -1 || index >= render.person_count as i64 {
            return Err(format!(
                "index {index} for frame {} outside [-1, {}]",
                render.frame_index,
                render.person_count as i64 - 1
            ));
        }
        choices.push(TargetChoice {
            frame_index: render.frame_index,
            index: index as i32,
        });
    }
    Ok(TargetReply { choices })
}

/// Timestamp prompt text for one frame.
pub fn timestamp_prompt(query: &TimestampQuery) -> String {
    format!(
        "{TIMESTAMP_PROMPT}\nVideo filename: {}\nFrame index: {}\n",
        query.video_id, query.frame_index
    )
}

/// Target prompt text for a query; frames are listed in render order.
pub fn target_prompt(query: &TargetQuery) -> String {
    let mut s = format!("{TARGET_PROMPT}\nVideo filename: {}\n", query.video_id);
    for r in &query.renders {
        s.push_str(&format!(
            "Frame {}: persons P0..P{}\n",
            r.frame_index,
            r.person_count as i64 - 1
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Canned {
        timestamps: Vec<String>,
        targets: Vec<String>,
        calls: AtomicU32,
    }

    impl Canned {
        fn new(timestamps: &[&str], targets: &[&str]) -> Self {
            Self {
                timestamps: timestamps.iter().map(|s| s.to_string()).collect(),
                targets: targets.iter().map(|s| s.to_string()).collect(),
                calls: AtomicU32::new(0),
            }
        }
    }

    impl AgentBackend for Canned {
        fn timestamp_payload(&self, _q: &TimestampQuery, attempt: u32) -> Result<String, AgentError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.timestamps[(attempt as usize).min(self.timestamps.len() - 1)].clone())
        }
        fn target_payload(&self, _q: &TargetQuery, attempt: u32) -> Result<String, AgentError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.targets[(attempt as usize).min(self.targets.len() - 1)].clone())
        }
    }

    fn tq(frame: usize) -> TimestampQuery {
        TimestampQuery {
            video_id: "a.mp4".into(),
            frame_index: frame,
            frame_count: 100,
            image: None,
        }
    }

    #[test]
    fn prompt_field_list_reply() {
        let b = Canned::new(
            &[r#"{"video":"a.mp4","frame":12,"detected":true,"timestamp":"14:23:05.120","note":"ipad visible"}"#],
            &[],
        );
        let r = query_timestamp(&b, &tq(12)).unwrap();
        assert!(r.detected);
        assert_eq!(r.timestamp_raw.as_deref(), Some("14:23:05.120"));
        assert_eq!(r.timestamp_ms(), Some(51_785_120));
        assert_eq!(r.note, "ipad visible");
    }

    #[test]
    fn null_timestamp_branch() {
        let b = Canned::new(
            &[r#"{"video":"a.mp4","frame":3,"detected":false,"timestamp":null,"note":"no tablet"}"#],
            &[],
        );
        let r = query_timestamp(&b, &tq(3)).unwrap();
        assert!(!r.detected);
        assert_eq!(r.timestamp_raw, None);
    }

    #[test]
    fn inconsistent_reply_is_protocol_error() {
        let raw = r#"{"video":"a.mp4","frame":3,"detected":false,"timestamp":"14:23:05.120","note":""}"#;
        let b = Canned::new(&[raw], &[]);
        match query_timestamp(&b, &tq(3)) {
            Err(AgentError::Protocol { raw: got, .. }) => assert_eq!(got, raw),
            other => panic!("expected protocol error, got {other:?}"),
        }
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn prose_wrapped_reply_and_extra_fields() {
        let b = Canned::new(
            &[
                "Sure! Here it is: {\"video\":\"a.mp4\",\"frame\":7,\"detected\":true,\"timestamp\":\"00:01:02.003\",\"note\":\"brace } in note\",\"confidence\":0.9} hope that helps {}",
            ],
            &[],
        );
        let r = query_timestamp(&b, &tq(7)).unwrap();
        assert_eq!(r.timestamp_ms(), Some(62_003));
        assert_eq!(r.note, "brace } in note");
    }

    #[test]
    fn single_retry_recovers() {
        let b = Canned::new(
            &[
                "I cannot answer",
                r#"{"video":"a.mp4","frame":1,"detected":true,"timestamp":"00:00:00.033","note":""}"#,
            ],
            &[],
        );
        assert_eq!(query_timestamp(&b, &tq(1)).unwrap().timestamp_ms(), Some(33));
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn mismatched_frame_rejected() {
        let b = Canned::new(
            &[r#"{"video":"a.mp4","frame":8,"detected":true,"timestamp":"00:00:00.033","note":""}"#],
            &[],
        );
        assert!(matches!(query_timestamp(&b, &tq(1)), Err(AgentError::Protocol { .. })));
    }

    #[test]
    fn frame_outside_video_is_invalid_query() {
        let b = Canned::new(&["{}"], &[]);
        assert!(matches!(
            query_timestamp(&b, &tq(100)),
            Err(AgentError::InvalidQuery(_))
        ));
        assert_eq!(b.calls.load(Ordering::SeqCst), 0);
    }

    fn target_query(counts: &[usize]) -> TargetQuery {
        TargetQuery {
            video_id: "a.mp4".into(),
            renders: counts
                .iter()
                .enumerate()
                .map(|(i, &n)| TargetRender {
                    frame_index: i * 10,
                    person_count: n,
                    image: None,
                })
                .collect(),
        }
    }

    #[test]
    fn target_reply_round_trip() {
        let b = Canned::new(
            &[],
            &[r#"{"video":"a.mp4","targets":[{"frame":0,"index":1},{"frame":10,"index":1},{"frame":20,"index":-1}]}"#],
        );
        let r = query_targets(&b, &target_query(&[2, 3, 2])).unwrap();
        assert_eq!(r.indices(), vec![1, 1, -1]);
        assert_eq!(r.index_at(10), Some(1));
    }

    #[test]
    fn target_index_out_of_range() {
        let b = Canned::new(&[], &[r#"{"targets":[{"frame":0,"index":5}]}"#]);
        assert!(matches!(
            query_targets(&b, &target_query(&[2])),
            Err(AgentError::Protocol { .. })
        ));
    }

    #[test]
    fn target_query_requires_renders() {
        let b = Canned::new(&[], &["{}"]);
        assert!(matches!(
            query_targets(&b, &target_query(&[])),
            Err(AgentError::InvalidQuery(_))
        ));
    }

    #[test]
    fn json_extraction() {
        assert_eq!(extract_json_object("x {\"a\":{\"b\":1}} y"), Some("{\"a\":{\"b\":1}}"));
        assert_eq!(extract_json_object("{\"a\":\"\\\"}\"}"), Some("{\"a\":\"\\\"}\"}"));
        assert_eq!(extract_json_object("{ unbalanced"), None);
        assert_eq!(extract_json_object("none"), None);
    }

    #[test]
    fn prompts_name_the_query() {
        let p = timestamp_prompt(&tq(12));
        assert!(p.starts_with(TIMESTAMP_PROMPT));
        assert!(p.contains("a.mp4") && p.contains("Frame index: 12"));
        let p = target_prompt(&target_query(&[2, 1]));
        assert!(p.contains("Frame 10: persons P0..P0"));
    }
}
