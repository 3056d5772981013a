//! Evaluation metrics: masked SSIM, directional similarity and four-aspect
//! quality scores.

pub mod directional;
pub mod embed;
pub mod quality;
pub mod report;
pub mod ssim;

pub use directional::{directional_frames, directional_score};
pub use embed::{Embedder, HistogramEmbedder};
pub use quality::{parse_scores, QualityBackend, QualityRequest, QualityScores, RemoteQuality, StubQuality};
pub use report::{aggregate, aggregate_table, evaluate, EvalInputs, MetricsReport};
pub use ssim::{masked_ssim, masked_ssim_frames};
