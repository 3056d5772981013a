//! Scripted HTTP server for exercising the remote clients.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use vfxaug::vlm::RemoteConfig;

/// One canned reply: HTTP status, raw body and a delay before answering.
#[derive(Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    /// A chat-completion response whose message content is `content`.
    pub fn chat(content: &str) -> Self {
        Self::raw(200, &json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
    }

    pub fn raw(status: u16, body: &str) -> Self {
        Self {
            status,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, d: Duration) -> Self {
        self.delay = d;
        self
    }
}

pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Value>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Serves `replies` in order, one connection each, then stops.
    pub fn start(replies: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        let handle = std::thread::spawn(move || {
            for reply in replies {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let l = line.trim_end().to_ascii_lowercase();
                    if l.is_empty() {
                        break;
                    }
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; len];
                let _ = reader.read_exact(&mut body);
                log.lock().unwrap().push(serde_json::from_slice(&body).unwrap_or(Value::Null));
                std::thread::sleep(reply.delay);
                let resp = format!(
                    "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    reply.status,
                    reply.body.len(),
                    reply.body
                );
                let _ = stream.write_all(resp.as_bytes());
                let _ = stream.flush();
            }
        });
        Self {
            url,
            requests,
            handle: Some(handle),
        }
    }

    pub fn config(&self, timeout_secs: f64) -> RemoteConfig {
        RemoteConfig {
            endpoint: self.url.clone(),
            model: "mock".into(),
            api_key_env: "VFXAUG_TEST_UNSET_KEY".into(),
            timeout_secs,
            max_retries: 2,
            backoff_ms: 10,
            max_backoff_ms: 20,
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            if h.is_finished() {
                let _ = h.join();
            }
        }
    }
}

use vfxaug::corpus::{default_corpus, generate};
use vfxaug::metrics::{QualityBackend, QualityRequest, RemoteQuality};
use vfxaug::planner::{Planner, PlannerRequest, RemotePlanner};
use vfxaug::tensor::VideoClip;

pub type Case = fn() -> Result<(), String>;

fn scene_video() -> VideoClip {
    generate(&default_corpus()[0].spec).unwrap().video
}

fn plan_with(replies: Vec<Reply>, timeout: f64) -> (Result<vfxaug::planner::ScenePlan, vfxaug::Error>, MockServer) {
    let server = MockServer::start(replies);
    let planner = RemotePlanner::new(server.config(timeout)).unwrap();
    let video = scene_video();
    let req = PlannerRequest::new("add a red ball beside the blue square", &video, vec!["blue square".into()]).unwrap();
    (planner.plan(&req), server)
}

fn score_with(replies: Vec<Reply>, timeout: f64) -> (Result<vfxaug::metrics::QualityScores, vfxaug::Error>, MockServer) {
    let server = MockServer::start(replies);
    let q = RemoteQuality::new(server.config(timeout)).unwrap();
    let video = scene_video();
    let req = QualityRequest {
        original: &video,
        edited: &video,
        edit_prompt: "a blue square and a red ball",
        edit_object: "red ball",
        reference_mask: None,
    };
    (q.evaluate(&req), server)
}

fn expect_category<T: std::fmt::Debug>(r: Result<T, vfxaug::Error>, category: &str) -> Result<(), String> {
    match r {
        Err(e) if e.category() == category => Ok(()),
        other => Err(format!("expected a {category} error, got {other:?}")),
    }
}

const COMPOSITION: &str = r#"{"vfx_reasoning": "the ball sits on the floor", "composition_prompt": "a blue square and a red ball beside the blue square"}"#;
const OBJECTS: &str = r#"Here you go: ```json
{"original_objects": ["blue square"], "edit_object": "red ball"}
```"#;

pub fn planner_valid() -> Result<(), String> {
    let (r, server) = plan_with(vec![Reply::chat(COMPOSITION), Reply::chat(OBJECTS)], 5.0);
    let plan = r.map_err(|e| e.to_string())?;
    if plan.composition_prompt != "a blue square and a red ball beside the blue square"
        || plan.edit_object != "red ball"
        || plan.original_objects != ["blue square"]
    {
        return Err(format!("unexpected plan {plan:?}"));
    }
    let reqs = server.requests.lock().unwrap();
    let images = reqs[0]["messages"][1]["content"]
        .as_array()
        .map(|c| c.iter().filter(|p| p["type"] == "image_url").count())
        .unwrap_or(0);
    if reqs.len() != 2 || reqs[0]["model"] != "mock" || images == 0 {
        return Err(format!("unexpected requests: {} with {images} images", reqs.len()));
    }
    Ok(())
}

pub fn planner_malformed() -> Result<(), String> {
    let (r, _s) = plan_with(vec![Reply::chat("I would add a ball.")], 5.0);
    expect_category(r, "schema")?;
    let (r, _s) = plan_with(vec![Reply::chat(r#"{"composition_prompt": ""}"#)], 5.0);
    expect_category(r, "schema")?;
    let (r, _s) = plan_with(vec![Reply::chat(COMPOSITION), Reply::chat(r#"{"edit_object": "red ball"}"#)], 5.0);
    expect_category(r, "schema")?;
    let (r, _s) = plan_with(
        vec![Reply::chat(COMPOSITION), Reply::chat(r#"{"original_objects": [], "edit_object": "green tree"}"#)],
        5.0,
    );
    expect_category(r, "schema")?;
    let (r, _s) = plan_with(vec![Reply::raw(200, "not json")], 5.0);
    expect_category(r, "schema")?;
    let (r, _s) = plan_with(vec![Reply::raw(400, "bad request")], 5.0);
    expect_category(r, "planner")
}

pub fn planner_timeout() -> Result<(), String> {
    let (r, server) = plan_with(vec![Reply::chat(COMPOSITION).delayed(Duration::from_millis(1500))], 0.3);
    expect_category(r, "transport")?;
    if server.request_count() != 1 {
        return Err("timeout was retried".into());
    }
    Ok(())
}

pub fn planner_retries_server_errors() -> Result<(), String> {
    let (r, server) = plan_with(
        vec![Reply::raw(503, "busy"), Reply::raw(429, "slow down"), Reply::chat(COMPOSITION), Reply::chat(OBJECTS)],
        5.0,
    );
    r.map_err(|e| e.to_string())?;
    if server.request_count() != 4 {
        return Err(format!("{} requests", server.request_count()));
    }
    let (r, _s) = plan_with(vec![Reply::raw(500, ""), Reply::raw(500, ""), Reply::raw(500, "")], 5.0);
    expect_category(r, "transport")
}

pub fn quality_valid() -> Result<(), String> {
    let reply = "Text alignment: 0.8\nvisual_quality = 0.6\nEdit harmonization: 0.7\nDynamics: 1.0";
    let (r, server) = score_with(vec![Reply::chat(reply)], 5.0);
    let s = r.map_err(|e| e.to_string())?;
    if s.as_array() != [0.8, 0.6, 0.7, 1.0] {
        return Err(format!("unexpected scores {s:?}"));
    }
    let reqs = server.requests.lock().unwrap();
    let images = reqs[0]["messages"][1]["content"].as_array().map(|c| c.len() - 1).unwrap_or(0);
    if images != 6 {
        return Err(format!("{images} images sent"));
    }
    Ok(())
}

pub fn quality_malformed() -> Result<(), String> {
    let (r, _s) = score_with(vec![Reply::chat("Looks great!")], 5.0);
    expect_category(r, "schema")?;
    let (r, _s) = score_with(
        vec![Reply::chat("text_alignment 1.5 visual_quality 0.5 edit_harmonization 0.5 dynamics 0.5")],
        5.0,
    );
    expect_category(r, "schema")?;
    let (r, _s) = score_with(vec![Reply::raw(200, r#"{"choices": []}"#)], 5.0);
    expect_category(r, "schema")
}

pub fn quality_timeout() -> Result<(), String> {
    let (r, _s) = score_with(vec![Reply::chat("x").delayed(Duration::from_millis(1500))], 0.3);
    expect_category(r, "transport")
}

pub const REMOTE_CASES: [(&str, Case); 7] = [
    ("planner valid", planner_valid),
    ("planner malformed", planner_malformed),
    ("planner timeout", planner_timeout),
    ("planner retries", planner_retries_server_errors),
    ("evaluator valid", quality_valid),
    ("evaluator malformed", quality_malformed),
    ("evaluator timeout", quality_timeout),
];
