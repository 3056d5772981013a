//! Minimal blocking client for OpenAI-compatible chat-completion endpoints
//! with image inputs.

use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::tensor::VideoClip;

/// Endpoint settings. The API key is read from the environment variable
/// named by `api_key_env`, never from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    /// Base URL such as `http://localhost:8000/v1`, or a full
    /// `.../chat/completions` URL.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "VFXAUG_API_KEY".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            max_backoff_ms: 8000,
        }
    }
}

impl RemoteConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }

    fn url(&self) -> String {
        let e = self.endpoint.trim_end_matches('/');
        if e.ends_with("/chat/completions") {
            e.to_string()
        } else {
            format!("{e}/chat/completions")
        }
    }
}

pub struct ChatClient {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl ChatClient {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if !(config.timeout_secs > 0.0 && config.timeout_secs.is_finite()) {
            return Err(Error::Config("remote timeout must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self { config, http, api_key })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// One system + user exchange; returns the assistant message text.
    ///
    /// Connection failures, 429 and 5xx responses are retried with doubling
    /// backoff up to `max_retries`; a timeout ends the call immediately.
    pub fn chat(&self, system: &str, user: &str, images_png: &[Vec<u8>]) -> Result<String> {
        let mut content = vec![json!({"type": "text", "text": user})];
        for png in images_png {
            let b64 = base64::engine::general_purpose::STANDARD.encode(png);
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{b64}")}
            }));
        }
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": content},
            ],
        });
        let mut attempt = 0u32;
        loop {
            match self.send(&body) {
                Ok(text) => return Ok(text),
                Err(e @ Error::Transport(_)) if attempt < self.config.max_retries => {
                    let delay = self
                        .config
                        .backoff_ms
                        .saturating_mul(1u64 << attempt.min(20))
                        .min(self.config.max_backoff_ms);
                    warn!("chat request failed ({e}); retry {} in {delay} ms", attempt + 1);
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn send(&self, body: &Value) -> Result<String> {
        let mut req = self.http.post(self.config.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| self.classify(e))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| self.classify(e))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Error::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Error::Planner(format!("HTTP {status}: {}", truncate(&text, 200))));
        }
        debug!("chat reply: {}", truncate(&text, 500));
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
            reason: format!("response is not JSON: {e}"),
            raw: text.clone(),
        })?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Schema {
                reason: "missing choices[0].message.content".into(),
                raw: text,
            })
    }

    fn classify(&self, e: reqwest::Error) -> Error {
        if e.is_timeout() {
            Error::Timeout(self.config.timeout())
        } else {
            Error::Transport(e.to_string())
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// The first JSON object embedded in a reply (code fences and prose allowed).
pub fn extract_json_object(reply: &str) -> Result<Value> {
    let schema = |reason: &str| Error::Schema {
        reason: reason.to_string(),
        raw: reply.to_string(),
    };
    let start = reply.find('{').ok_or_else(|| schema("reply contains no JSON object"))?;
    let mut de = serde_json::Deserializer::from_str(&reply[start..]).into_iter::<Value>();
    match de.next() {
        Some(Ok(v @ Value::Object(_))) => Ok(v),
        Some(Ok(_)) => Err(schema("reply JSON is not an object")),
        Some(Err(e)) => Err(schema(&format!("invalid JSON: {e}"))),
        None => Err(schema("reply contains no JSON object")),
    }
}

/// First, middle and last frames.
pub fn keyframe_indices(frames: usize) -> Vec<usize> {
    let mut idx = vec![0, frames / 2, frames.saturating_sub(1)];
    idx.dedup();
    idx
}

/// PNG-encode one frame of a clip.
pub fn frame_png(video: &VideoClip, f: usize) -> Result<Vec<u8>> {
    let (h, w) = (video.height() as u32, video.width() as u32);
    let bytes: Vec<u8> = video
        .frame(f)
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::RgbImage::from_raw(w, h, bytes).ok_or_else(|| Error::Shape("frame buffer size".into()))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_fenced_json() {
        let v = extract_json_object("Sure!\n```json\n{\"a\": 1}\n```\nbye").unwrap();
        assert_eq!(v["a"], 1);
        assert!(matches!(extract_json_object("no json"), Err(Error::Schema { .. })));
        assert!(matches!(extract_json_object("{\"a\": "), Err(Error::Schema { .. })));
    }

    #[test]
    fn keyframes_are_first_middle_last() {
        assert_eq!(keyframe_indices(8), vec![0, 4, 7]);
        assert_eq!(keyframe_indices(1), vec![0]);
        assert_eq!(keyframe_indices(2), vec![0, 1]);
    }

    #[test]
    fn url_appends_completions_path() {
        let mut c = RemoteConfig::default();
        c.endpoint = "http://h/v1/".into();
        assert_eq!(c.url(), "http://h/v1/chat/completions");
        c.endpoint = "http://h/v1/chat/completions".into();
        assert_eq!(c.url(), "http://h/v1/chat/completions");
    }

    #[test]
    fn frame_png_decodes_back() {
        let v = VideoClip::filled(2, 4, 6, 3, 0.5).unwrap();
        let png = frame_png(&v, 1).unwrap();
        let img = image::load_from_memory(&png).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (6, 4));
        assert_eq!(img.get_pixel(0, 0).0, [128, 128, 128]);
    }
}
