//! Deterministic synthetic corpus of moving colored shapes with ground-truth
//! object tracks.

mod default;
pub mod palette;
pub mod scene;
mod training;

pub use default::{default_corpus, CorpusEntry};
pub use palette::{rgb_distance, ColorWord};
pub use scene::{generate, random_scene, Background, GeneratedScene, Motion, ObjectSpec, ObjectTrack, SceneSpec, Shape};
pub use training::{composition_caption, training_examples, training_scenes, TrainingScene, DEFAULT_EXTRA_SCENES};
