//! Epsilon-prediction training of the toy model with Adam.

use std::io::Write;
use std::path::Path;

use log::info;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::dit::{backward, forward_with_tape, patchify, DiTModel, DiTWeights};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::LatentClip;

/// One training pair: a clean latent and its caption ids.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub latent: LatentClip,
    pub text_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f32,
    pub warmup: usize,
    /// Cosine-anneal the learning rate after warmup down to
    /// `lr * final_lr_ratio` at the last step.
    pub cosine_decay: bool,
    pub final_lr_ratio: f32,
    pub batch: usize,
    pub beta1: f32,
    pub beta2: f32,
    pub adam_eps: f32,
    pub grad_clip: f32,
    /// Probability of training a sample with an empty caption.
    pub caption_dropout: f64,
    pub seed: u64,
    /// Window for the smoothed loss.
    pub smoothing: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 2e-3,
            warmup: 50,
            cosine_decay: true,
            final_lr_ratio: 0.05,
            batch: 1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            caption_dropout: 0.2,
            seed: 0,
            smoothing: 100,
        }
    }
}

impl TrainConfig {
    /// Learning rate applied at `step`: linear warmup, then constant or
    /// cosine-annealed.
    pub fn lr_at(&self, step: usize) -> f32 {
        if self.warmup > 0 && step < self.warmup {
            return self.lr * (step + 1) as f32 / self.warmup as f32;
        }
        if !self.cosine_decay {
            return self.lr;
        }
        let span = self.steps.saturating_sub(self.warmup).saturating_sub(1).max(1);
        let p = ((step - self.warmup) as f64 / span as f64).min(1.0);
        let c = 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
        let floor = self.final_lr_ratio as f64;
        (self.lr as f64 * (floor + (1.0 - floor) * c)) as f32
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.smoothing == 0 {
            return Err(Error::Config("batch and smoothing must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.final_lr_ratio) {
            return Err(Error::Config("final_lr_ratio outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.caption_dropout) {
            return Err(Error::Config("caption_dropout outside [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas outside [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-step losses of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLog {
    pub losses: Vec<f32>,
    pub window: usize,
}

impl LossLog {
    /// Mean over the first `window` steps.
    pub fn initial_smoothed(&self) -> f64 {
        let n = self.window.min(self.losses.len());
        mean(&self.losses[..n])
    }

    /// Mean over the last `window` steps.
    pub fn final_smoothed(&self) -> f64 {
        let n = self.window.min(self.losses.len());
        mean(&self.losses[self.losses.len() - n..])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        writeln!(f, "step,loss").map_err(|e| Error::io(path, e))?;
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(f, "{i},{l}").map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }
}

fn mean(v: &[f32]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
}

struct Adam {
    m: DiTWeights,
    v: DiTWeights,
    t: i32,
}

impl Adam {
    fn new(model: &DiTModel) -> Self {
        Self {
            m: DiTWeights::zeros(&model.config),
            v: DiTWeights::zeros(&model.config),
            t: 0,
        }
    }

    fn step(&mut self, weights: &mut DiTWeights, grads: &DiTWeights, lr: f32, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let g = grads.named();
        let m = self.m.named_mut();
        let v = self.v.named_mut();
        let w = weights.named_mut();
        for (((_, w), (_, m)), ((_, v), (_, g))) in w.into_iter().zip(m).zip(v.into_iter().zip(g)) {
            ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w -= lr * mh / (vh.sqrt() + cfg.adam_eps);
            });
        }
    }
}

fn global_norm(grads: &DiTWeights) -> f64 {
    grads
        .named()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|&g| (g as f64) * (g as f64))
        .sum::<f64>()
        .sqrt()
}

/// Train `model` in place and return the per-step loss log.
///
/// Each step draws `batch` examples, timesteps uniform in `1..=T` and fresh
/// noise from the seeded training stream, then applies one clipped Adam update
/// on the mean squared noise-prediction error.
pub fn train_toy(
    model: &mut DiTModel,
    schedule: &NoiseSchedule,
    data: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<LossLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidValue("training corpus is empty".into()));
    }
    let mut rng = rng::stream(cfg.seed, &[rng::TAG_TRAIN]);
    let mut adam = Adam::new(model);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut grads = DiTWeights::zeros(&model.config);
        let mut loss = 0.0f64;
        for _ in 0..cfg.batch {
            let ex = &data[rng::below(&mut rng, data.len())];
            let t = 1 + rng::below(&mut rng, schedule.max_t());
            let drop_caption = rng.random::<f64>() < cfg.caption_dropout;
            let text: &[usize] = if drop_caption { &[] } else { &ex.text_ids };
            let eps = ex.latent.with_data(rng::gaussian_vec(&mut rng, ex.latent.len()))?;
            let ab = schedule.alpha_bar(t);
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            let noisy_data = ex
                .latent
                .data()
                .iter()
                .zip(eps.data())
                .map(|(&x, &e)| (a * x as f64 + b * e as f64) as f32)
                .collect();
            let noisy = ex.latent.with_data(noisy_data)?;
            let tape = forward_with_tape(model, &noisy, t, text)?;
            let target = patchify(&eps, model.config.patch)?.tokens;
            let diff: Array2<f32> = &tape.output_tokens - &target;
            let n = diff.len() as f32;
            loss += diff.iter().map(|&d| (d as f64) * (d as f64)).sum::<f64>() / n as f64;
            let d_out = diff.mapv(|d| 2.0 * d / (n * cfg.batch as f32));
            backward(model, &tape, &d_out, &mut grads);
        }
        let loss = (loss / cfg.batch as f64) as f32;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        losses.push(loss);
        let norm = global_norm(&grads);
        if cfg.grad_clip > 0.0 && norm > cfg.grad_clip as f64 {
            let s = (cfg.grad_clip as f64 / norm) as f32;
            for (_, g) in grads.named_mut() {
                g.mapv_inplace(|v| v * s);
            }
        }
        let lr = cfg.lr_at(step);
        if cfg.lr > 0.0 {
            adam.step(&mut model.weights, &grads, lr, cfg);
        }
        if !model.weights.is_finite() {
            return Err(Error::Diverged { step, loss: f32::NAN });
        }
        if (step + 1) % 100 == 0 {
            info!("train step {} loss {:.4}", step + 1, mean(&losses[losses.len().saturating_sub(100)..]));
        }
    }
    Ok(LossLog {
        losses,
        window: cfg.smoothing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::ScheduleConfig;
    use crate::dit::DiTConfig;

    fn setup() -> (DiTModel, NoiseSchedule, Vec<TrainExample>) {
        let cfg = DiTConfig {
            blocks: 1,
            dim: 24,
            heads: 2,
            mlp_hidden: 32,
            seed: 1,
            ..Default::default()
        };
        let model = DiTModel::new(cfg).unwrap();
        let sched = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        let data = (0..3)
            .map(|i| {
                let v: Vec<f32> = (0..2 * 4 * 4 * 3).map(|j| ((i * 7 + j) % 5) as f32 / 4.0).collect();
                TrainExample {
                    latent: LatentClip::new(2, 4, 4, 3, v).unwrap(),
                    text_ids: vec![i, i + 1],
                }
            })
            .collect();
        (model, sched, data)
    }

    #[test]
    fn lr_schedule_warms_up_then_anneals() {
        let cfg = TrainConfig {
            steps: 110,
            lr: 1.0,
            warmup: 10,
            final_lr_ratio: 0.1,
            ..Default::default()
        };
        assert!((cfg.lr_at(0) - 0.1).abs() < 1e-6);
        assert!((cfg.lr_at(10) - 1.0).abs() < 1e-6);
        assert!((cfg.lr_at(109) - 0.1).abs() < 1e-6);
        assert!((cfg.lr_at(59) - 0.55).abs() < 1e-2);
        let flat = TrainConfig { cosine_decay: false, ..cfg };
        assert_eq!(flat.lr_at(100), 1.0);
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let (mut m, s, d) = setup();
        let before = m.weights.clone();
        let cfg = TrainConfig {
            steps: 5,
            lr: 0.0,
            ..Default::default()
        };
        let log = train_toy(&mut m, &s, &d, &cfg).unwrap();
        assert_eq!(log.losses.len(), 5);
        assert_eq!(m.weights, before);
    }

    #[test]
    fn same_seed_gives_same_loss_curve() {
        let cfg = TrainConfig {
            steps: 20,
            ..Default::default()
        };
        let (mut a, s, d) = setup();
        let (mut b, _, _) = setup();
        let la = train_toy(&mut a, &s, &d, &cfg).unwrap();
        let lb = train_toy(&mut b, &s, &d, &cfg).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let (mut m, s, _) = setup();
        assert!(train_toy(&mut m, &s, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn smoothed_loss_windows() {
        let log = LossLog {
            losses: vec![4.0, 2.0, 1.0, 1.0],
            window: 2,
        };
        assert_eq!(log.initial_smoothed(), 3.0);
        assert_eq!(log.final_smoothed(), 1.0);
    }
}
