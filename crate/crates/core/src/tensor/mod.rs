//! Dense video/latent containers, the linear toy VAE, latent masks and the
//! binary tensor file format.

mod clip;
pub mod io;
mod mask;
pub mod png;
mod vae;

pub use clip::{LatentClip, VideoClip};
pub use png::{read_mask_frames, read_video_frames, write_mask_frames, write_video_frames};
pub use io::{read_bundle, read_tensor, write_bundle, write_tensor, TensorFile};
pub use mask::{LatentMask, PixelMask};
pub use vae::{latent_mask_from_pixel_mask, latent_mask_to_pixels, two_means_partition, vae_decode, vae_encode, VaeFactors};
