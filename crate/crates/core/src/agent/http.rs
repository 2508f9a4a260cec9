use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    extract_json_object, target_prompt, timestamp_prompt, AgentBackend, AgentError, AgentImage, FixtureRecorder,
    TargetQuery, TargetRecord, TimestampQuery,
};
use crate::preproc::{encode_ppm, RasterImage};

/// Environment variable holding the bearer token unless configured otherwise.
pub const DEFAULT_TOKEN_ENV: &str = "JOINTSYNC_AGENT_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub url: String,
    pub model: String,
    pub token_env: String,
    pub timeout_s: f64,
    pub max_in_flight: usize,
    /// When set, every reply is appended to fixture files in this directory.
    pub record_dir: Option<PathBuf>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: String::new(),
            token_env: DEFAULT_TOKEN_ENV.to_owned(),
            timeout_s: 120.0,
            max_in_flight: 4,
            record_dir: None,
        }
    }
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    prompt: &'a str,
    image_b64: String,
}

/// Posts `{model, prompt, image_b64}` to a JSON endpoint and returns the
/// first JSON object found in the response body.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    recorder: Option<FixtureRecorder>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, AgentError> {
        if config.url.is_empty() {
            return Err(AgentError::InvalidQuery("agent URL is not configured".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .build()
            .into();
        let recorder = config.record_dir.as_deref().map(FixtureRecorder::new).transpose()?;
        Ok(Self {
            config,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            recorder,
        })
    }

    fn post(&self, prompt: &str, image: &RasterImage) -> Result<String, AgentError> {
        let token = std::env::var(&self.config.token_env).map_err(|_| {
            AgentError::Transport(format!("bearer token variable {} is not set", self.config.token_env))
        })?;
        let body = RequestBody {
            model: &self.config.model,
            prompt,
            image_b64: base64::engine::general_purpose::STANDARD.encode(encode_ppm(image)),
        };
        let body = serde_json::to_string(&body).expect("request serializes");

        let _permit = self.acquire();
        let mut response = self
            .agent
            .post(&self.config.url)
            .header("Authorization", &format!("Bearer {token}"))
            .header("Content-Type", "application/json")
            .send(body.as_str())
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(extract_json_object(&text).unwrap_or(&text).to_owned())
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.config.max_in_flight.max(1) {
            n = self.slot_freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a HttpBackend);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.0.slot_freed.notify_one();
    }
}

fn checked_image(image: Option<&AgentImage>) -> Result<&RasterImage, AgentError> {
    let image = image.ok_or_else(|| AgentError::InvalidQuery("HTTP backend needs a frame image".into()))?;
    if !image.is_anonymized() {
        return Err(AgentError::NotAnonymized);
    }
    Ok(image.raster())
}

/// Stacks renders vertically, left aligned on a black canvas.
fn stack_vertically(images: &[&RasterImage]) -> RasterImage {
    let width = images.iter().map(|i| i.width()).max().unwrap_or(0);
    let height = images.iter().map(|i| i.height()).sum();
    let mut out = RasterImage::filled(width, height, [0, 0, 0]);
    let mut y0 = 0;
    for img in images {
        for y in 0..img.height() {
            for x in 0..img.width() {
                out.set_pixel(x, y0 + y, img.pixel(x, y));
            }
        }
        y0 += img.height();
    }
    out
}

impl AgentBackend for HttpBackend {
    fn timestamp_payload(&self, query: &TimestampQuery, _attempt: u32) -> Result<String, AgentError> {
        let image = checked_image(query.image.as_ref())?;
        let payload = self.post(&timestamp_prompt(query), image)?;
        if let Some(rec) = &self.recorder {
            rec.record_timestamp_payload(&payload)?;
        }
        Ok(payload)
    }

    fn target_payload(&self, query: &TargetQuery, _attempt: u32) -> Result<String, AgentError> {
        let images = query
            .renders
            .iter()
            .map(|r| checked_image(r.image.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let payload = self.post(&target_prompt(query), &stack_vertically(&images))?;
        if let Some(rec) = &self.recorder {
            #[derive(Deserialize)]
            struct Targets {
                targets: Vec<super::TargetChoice>,
            }
            if let Ok(t) = serde_json::from_str::<Targets>(&payload) {
                for c in t.targets {
                    rec.record_target(&TargetRecord {
                        video: query.video_id.clone(),
                        frame: c.frame_index,
                        index: c.index,
                    })?;
                }
            }
        }
        Ok(payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{query_timestamp, FixtureBackend};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Serves `replies` in order, one connection each, and returns the raw requests.
    fn serve(replies: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/agent", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut requests = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body_in = vec![0u8; content_length];
                reader.read_exact(&mut body_in).unwrap();
                requests.push(format!("{head}{}", String::from_utf8(body_in).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            requests
        });
        (url, handle)
    }

    fn query(anonymized: bool) -> TimestampQuery {
        let raster = RasterImage::filled(2, 2, [10, 20, 30]);
        TimestampQuery {
            video_id: "cam_a.mp4".into(),
            frame_index: 4,
            frame_count: 10,
            image: Some(if anonymized {
                AgentImage::anonymized(raster)
            } else {
                AgentImage::raw(raster)
            }),
        }
    }

    fn config(url: String, env: &str, record: Option<PathBuf>) -> HttpConfig {
        HttpConfig {
            url,
            model: "vision-model".into(),
            token_env: env.into(),
            timeout_s: 10.0,
            max_in_flight: 2,
            record_dir: record,
        }
    }

    #[test]
    fn posts_contract_body_and_parses_wrapped_reply() {
        let env = "JOINTSYNC_TEST_TOKEN_A";
        std::env::set_var(env, "secret-token");
        let reply =
            r#"The answer is {"video":"cam_a.mp4","frame":4,"detected":true,"timestamp":"10:00:00.500","note":"ok"}."#;
        let (url, server) = serve(vec![(200, reply.to_owned())]);
        let dir = tempfile::tempdir().unwrap();
        let backend = HttpBackend::new(config(url, env, Some(dir.path().to_owned()))).unwrap();
        let r = query_timestamp(&backend, &query(true)).unwrap();
        assert_eq!(r.timestamp_ms(), Some(36_000_500));

        let requests = server.join().unwrap();
        let req = &requests[0];
        assert!(req.starts_with("POST /v1/agent"));
        assert!(req.to_ascii_lowercase().contains("authorization: bearer secret-token"));
        let body: serde_json::Value = serde_json::from_str(req.split("\r\n\r\n").nth(1).unwrap()).unwrap();
        assert_eq!(body["model"], "vision-model");
        assert!(body["prompt"].as_str().unwrap().contains("Frame index: 4"));
        let ppm = base64::engine::general_purpose::STANDARD
            .decode(body["image_b64"].as_str().unwrap())
            .unwrap();
        assert!(ppm.starts_with(b"P6\n2 2\n255\n"));

        // the recorded reply replays through the fixture backend
        let fixture = FixtureBackend::load(dir.path()).unwrap();
        assert_eq!(query_timestamp(&fixture, &query(false)).unwrap(), r);
    }

    #[test]
    fn refuses_raw_frames() {
        let backend = HttpBackend::new(config("http://127.0.0.1:9/".into(), "JOINTSYNC_TEST_TOKEN_B", None)).unwrap();
        assert!(matches!(
            query_timestamp(&backend, &query(false)),
            Err(AgentError::NotAnonymized)
        ));
    }

    #[test]
    fn server_error_is_retriable_transport_failure() {
        let env = "JOINTSYNC_TEST_TOKEN_C";
        std::env::set_var(env, "t");
        let (url, server) = serve(vec![(503, "busy".to_owned())]);
        let backend = HttpBackend::new(config(url, env, None)).unwrap();
        let err = query_timestamp(&backend, &query(true)).unwrap_err();
        assert!(err.is_retriable(), "{err}");
        server.join().unwrap();
    }

    #[test]
    fn malformed_twice_is_protocol_error() {
        let env = "JOINTSYNC_TEST_TOKEN_D";
        std::env::set_var(env, "t");
        let (url, server) = serve(vec![(200, "no json here".into()), (200, "still none".into())]);
        let backend = HttpBackend::new(config(url, env, None)).unwrap();
        match query_timestamp(&backend, &query(true)) {
            Err(AgentError::Protocol { raw, .. }) => assert_eq!(raw, "still none"),
            other => panic!("expected protocol error, got {other:?}"),
        }
        assert_eq!(server.join().unwrap().len(), 2);
    }

    #[test]
    fn missing_url_is_rejected() {
        assert!(HttpBackend::new(HttpConfig::default()).is_err());
    }
}
