//! Toy video diffusion transformer with joint text/video attention and
//! three-axis RoPE.

mod grad;
pub mod model;
pub mod patch;
pub mod rope;
pub mod text;

pub use grad::{backward, forward_with_tape, ForwardTape};
pub use model::{DiTConfig, DiTModel, DiTWeights};
pub use patch::{patchify, unpatchify, Patches};
pub use rope::{apply_rope, RopeConfig, RopeTable};
