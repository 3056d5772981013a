//! Text-driven insertion of dynamic content into existing videos.
//!
//! The pipeline inverts a source clip through a small video diffusion
//! transformer, caches the per-step attention keys and values, and then
//! samples a composite under a scene-level prompt while extending attention
//! with a sparse set of cached source anchors. New content is harmonized by
//! repeatedly re-noising the composite and copying the sampled latent back in
//! only where the new object was segmented.

pub mod attention;
pub mod corpus;
pub mod diffusion;
pub mod dit;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod planner;
pub mod rng;
pub mod segment;
pub mod tensor;
pub mod vlm;

pub use error::{Error, Result};
