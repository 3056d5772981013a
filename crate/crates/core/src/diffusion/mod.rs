//! Noise schedule, deterministic DDIM sampling and inversion, SDEdit and
//! toy-model training.

pub mod ddim;
pub mod manifest;
pub mod schedule;
pub mod train;

pub use ddim::{
    ddim_invert, ddim_invert_with, ddim_sample, ddim_sample_with, ddim_step, ddim_step_clamped, gaussian_like,
    guided_eps, noise_to_level, sdedit, InvertConfig, Inversion, SampleOptions,
};
pub use manifest::RunManifest;
pub use schedule::{NoiseSchedule, ScheduleConfig};
pub use train::{train_toy, LossLog, TrainConfig, TrainExample};
