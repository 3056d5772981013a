//! Attention processors: standard joint attention, source-extended attention
//! and anchor extended attention with seeded per-layer anchor dropout.

pub mod anchors;
pub mod cache;
pub mod kernel;
pub mod processor;

pub use anchors::{anchor_count, select_anchors, AnchorSelection};
pub use cache::{AttentionCache, CacheEntry};
pub use kernel::{attention, extend, multi_head, softmax_rows};
pub use processor::{
    AttentionInputs, AttentionMode, AttentionProcessor, CaptureProcessor, ExtendedProcessor, StandardProcessor,
};
