//! Training scenes: the default corpus plus random scenes captioned both
//! descriptively and in composition form.

use super::default::default_corpus;
use super::scene::{generate, random_scene, ObjectSpec, SceneSpec, Shape};
use crate::diffusion::TrainExample;
use crate::dit::text::tokenize;
use crate::error::Result;
use crate::rng;
use crate::tensor::{vae_encode, VaeFactors};

/// Random scenes added to the corpus when training the toy model.
pub const DEFAULT_EXTRA_SCENES: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingScene {
    pub spec: SceneSpec,
    pub captions: Vec<String>,
}

/// Name of the object as an instruction would phrase it.
fn edit_phrase(o: &ObjectSpec) -> String {
    let noun = match o.shape {
        Shape::Disk => "ball",
        Shape::Square => "box",
        Shape::Triangle => "triangle",
    };
    format!("{} {noun}", o.color.word())
}

/// Placement of `obj` relative to `anchor` at the middle frame.
fn relation(obj: &ObjectSpec, anchor: &ObjectSpec, frames: usize) -> &'static str {
    let f = frames / 2;
    let (p, q) = (obj.motion.position(f), anchor.motion.position(f));
    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
    if dx.abs() >= dy.abs() {
        "beside"
    } else if dy < 0.0 {
        "above"
    } else {
        "below"
    }
}

/// Caption in the composition-prompt form, treating the front-most object as
/// newly added.
pub fn composition_caption(spec: &SceneSpec) -> Option<String> {
    let (new, rest) = spec.objects.split_last()?;
    let phrase = edit_phrase(new);
    Some(match rest.first() {
        None => format!("a scene with a new {phrase}"),
        Some(anchor) => {
            let listed: Vec<String> = rest.iter().map(|o| format!("a {}", o.label())).collect();
            format!(
                "{} and a new {phrase} {} the {}",
                listed.join(" and "),
                relation(new, anchor, spec.frames),
                anchor.label()
            )
        }
    })
}

/// Default corpus scenes with their captions, followed by `extra` random
/// 64x64x8 scenes carrying both caption forms.
pub fn training_scenes(extra: usize, seed: u64) -> Vec<TrainingScene> {
    let mut out: Vec<TrainingScene> = default_corpus()
        .into_iter()
        .map(|e| TrainingScene {
            captions: vec![e.spec.caption()],
            spec: e.spec,
        })
        .collect();
    for i in 0..extra {
        let spec = random_scene(rng::derive_seed(seed, &[rng::TAG_SCENE, i as u64]), 8, 64, 64);
        let mut captions = vec![spec.caption()];
        captions.extend(composition_caption(&spec));
        out.push(TrainingScene { spec, captions });
    }
    out
}

/// One training example per (scene, caption) pair.
pub fn training_examples(scenes: &[TrainingScene], vae: VaeFactors) -> Result<Vec<TrainExample>> {
    let mut out = Vec::new();
    for s in scenes {
        let latent = vae_encode(&generate(&s.spec)?.video, vae)?;
        for c in &s.captions {
            out.push(TrainExample {
                latent: latent.clone(),
                text_ids: tokenize(c),
            });
        }
    }
    Ok(out)
}
