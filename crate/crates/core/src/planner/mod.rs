//! Scene planning: turn an edit instruction and key frames into a
//! composition prompt, the prominent source objects and the new object.

mod grammar;

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use grammar::{parse_instruction, Instruction, GRAMMAR, RELATIONS};

use crate::error::{Error, Result};
use crate::tensor::VideoClip;
use crate::vlm::{extract_json_object, frame_png, keyframe_indices, ChatClient, RemoteConfig};

pub const COMPOSITION_PROMPT: &str = include_str!("../../assets/prompts/composition.txt");
pub const OBJECTS_PROMPT: &str = include_str!("../../assets/prompts/objects.txt");

/// Planner output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePlan {
    /// Caption of the full edited scene.
    pub composition_prompt: String,
    /// Prominent objects of the source video.
    pub original_objects: Vec<String>,
    /// The new content.
    pub edit_object: String,
    pub rationale: String,
}

impl ScenePlan {
    /// Checks `edit_object` is nonempty and named in the composition prompt,
    /// and `original_objects` are distinct.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Schema {
            reason,
            raw: format!("{self:?}"),
        };
        if self.edit_object.trim().is_empty() {
            return Err(bad("edit object is empty".into()));
        }
        if self.composition_prompt.trim().is_empty() {
            return Err(bad("composition prompt is empty".into()));
        }
        let prompt = self.composition_prompt.to_lowercase();
        if !prompt.contains(&self.edit_object.to_lowercase()) {
            return Err(bad(format!(
                "composition prompt does not mention the edit object {:?}",
                self.edit_object
            )));
        }
        for (i, o) in self.original_objects.iter().enumerate() {
            if self.original_objects[..i].iter().any(|p| p.eq_ignore_ascii_case(o)) {
                return Err(bad(format!("duplicate original object {o:?}")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("plan: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("plan {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct PlannerRequest {
    pub instruction: String,
    /// Subsampled key frames of the source video.
    pub keyframes: VideoClip,
    /// Ground-truth scene labels (used by the offline planners).
    pub labels: Vec<String>,
    pub template_id: String,
}

impl PlannerRequest {
    /// Request with the first, middle and last frames of `video` as key frames.
    pub fn new(instruction: &str, video: &VideoClip, labels: Vec<String>) -> Result<Self> {
        Ok(Self {
            instruction: instruction.to_string(),
            keyframes: video.select_frames(&keyframe_indices(video.frames()))?,
            labels,
            template_id: "vfx-assistant/v1".into(),
        })
    }
}

pub trait Planner {
    fn plan(&self, request: &PlannerRequest) -> Result<ScenePlan>;
}

fn dedup(labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.iter().any(|o| o.eq_ignore_ascii_case(l)) {
            out.push(l.clone());
        }
    }
    out
}

fn list_objects(labels: &[String]) -> String {
    labels.iter().map(|l| format!("a {l}")).collect::<Vec<_>>().join(" and ")
}

/// Deterministic grammar-based planner.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubPlanner;

impl Planner for StubPlanner {
    fn plan(&self, request: &PlannerRequest) -> Result<ScenePlan> {
        let ins = parse_instruction(&request.instruction)?;
        let labels = dedup(&request.labels);
        let placement = match (&ins.relation, &ins.anchor) {
            (Some(r), Some(a)) => format!(" {r} the {a}"),
            _ => String::new(),
        };
        let composition_prompt = if labels.is_empty() {
            format!("a scene with a new {}{placement}", ins.object)
        } else {
            format!("{} and a new {}{placement}", list_objects(&labels), ins.object)
        };
        let rationale = format!(
            "Insert the {}{placement}; keep {} unchanged in appearance, position and motion.",
            ins.object,
            if labels.is_empty() { "the scene".to_string() } else { labels.join(", ") }
        );
        let plan = ScenePlan {
            composition_prompt,
            original_objects: labels,
            edit_object: ins.object,
            rationale,
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Planner without scene reasoning: the raw instruction is the composition
/// prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaivePlanner;

impl Planner for NaivePlanner {
    fn plan(&self, request: &PlannerRequest) -> Result<ScenePlan> {
        let edit_object = match parse_instruction(&request.instruction) {
            Ok(ins) => ins.object,
            Err(_) => request.instruction.trim().to_string(),
        };
        let plan = ScenePlan {
            composition_prompt: request.instruction.clone(),
            original_objects: dedup(&request.labels),
            edit_object,
            rationale: String::new(),
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Planner backed by a chat-completion endpoint: one call for the
/// composition prompt, one for the object lists.
pub struct RemotePlanner {
    client: ChatClient,
}

impl RemotePlanner {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        Ok(Self {
            client: ChatClient::new(config)?,
        })
    }
}

fn field_str(v: &Value, key: &str, raw: &str) -> Result<String> {
    match v.get(key).and_then(Value::as_str) {
        Some(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        _ => Err(Error::Schema {
            reason: format!("missing or empty string field `{key}`"),
            raw: raw.to_string(),
        }),
    }
}

fn strip_header(prompt: &str) -> String {
    prompt
        .lines()
        .skip_while(|l| l.starts_with('#') || l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

impl Planner for RemotePlanner {
    fn plan(&self, request: &PlannerRequest) -> Result<ScenePlan> {
        if request.keyframes.frames() == 0 {
            return Err(Error::Planner("request has no key frames".into()));
        }
        let images = (0..request.keyframes.frames())
            .map(|f| frame_png(&request.keyframes, f))
            .collect::<Result<Vec<_>>>()?;
        let user = format!("Instruction: {}", request.instruction);
        let reply = self.client.chat(&strip_header(COMPOSITION_PROMPT), &user, &images)?;
        let v = extract_json_object(&reply).inspect_err(|_| warn!("malformed composition reply: {reply}"))?;
        let composition_prompt = field_str(&v, "composition_prompt", &reply)?;
        let rationale = v
            .get("vfx_reasoning")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();

        let user = format!("Instruction: {}\nCaption of the edited video: {composition_prompt}", request.instruction);
        let reply = self.client.chat(&strip_header(OBJECTS_PROMPT), &user, &images)?;
        let v = extract_json_object(&reply).inspect_err(|_| warn!("malformed object-list reply: {reply}"))?;
        let edit_object = field_str(&v, "edit_object", &reply)?;
        let original_objects = match v.get("original_objects").and_then(Value::as_array) {
            Some(items) => items
                .iter()
                .map(|i| {
                    i.as_str().map(|s| s.trim().to_string()).ok_or_else(|| Error::Schema {
                        reason: "original_objects must be strings".into(),
                        raw: reply.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            None => {
                warn!("malformed object-list reply: {reply}");
                return Err(Error::Schema {
                    reason: "missing array field `original_objects`".into(),
                    raw: reply,
                });
            }
        };
        let plan = ScenePlan {
            composition_prompt,
            original_objects,
            edit_object,
            rationale,
        };
        plan.validate().inspect_err(|_| warn!("rejected remote plan: {reply}"))?;
        Ok(plan)
    }
}

/// Planner backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    #[default]
    Stub,
    Naive,
    Remote,
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stub" => Ok(Self::Stub),
            "naive" => Ok(Self::Naive),
            "remote" => Ok(Self::Remote),
            other => Err(Error::Config(format!("unknown planner `{other}` (stub|naive|remote)"))),
        }
    }
}

pub fn make_planner(kind: PlannerKind, remote: &RemoteConfig) -> Result<Box<dyn Planner>> {
    Ok(match kind {
        PlannerKind::Stub => Box::new(StubPlanner),
        PlannerKind::Naive => Box::new(NaivePlanner),
        PlannerKind::Remote => Box::new(RemotePlanner::new(remote.clone())?),
    })
}
