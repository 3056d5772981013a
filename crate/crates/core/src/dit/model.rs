//! The toy video diffusion transformer.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::patch::{patchify, token_grid, token_positions, unpatchify};
use super::rope::{RopeConfig, RopeTable};
use super::text;
use crate::attention::{AttentionInputs, AttentionProcessor};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::io::{read_bundle, write_bundle};
use crate::tensor::{LatentClip, TensorFile};

pub const LN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiTConfig {
    pub blocks: usize,
    pub dim: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub patch: [usize; 3],
    pub latent_channels: usize,
    pub vocab_size: usize,
    pub time_features: usize,
    pub rope_base: f32,
    pub seed: u64,
}

impl Default for DiTConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            dim: 96,
            heads: 4,
            mlp_hidden: 192,
            patch: [1, 2, 2],
            latent_channels: 3,
            vocab_size: text::vocab_size(),
            time_features: 64,
            rope_base: 100.0,
            seed: 0,
        }
    }
}

impl DiTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!("dim {} not divisible by {} heads", self.dim, self.heads)));
        }
        if self.dim % 6 != 0 || self.head_dim() % 6 != 0 {
            return Err(Error::Config(format!(
                "dim {} / head dim {} must be divisible by 6 for 3-axis RoPE",
                self.dim,
                self.head_dim()
            )));
        }
        if self.time_features % 2 != 0 || self.time_features == 0 {
            return Err(Error::Config("time_features must be even and positive".into()));
        }
        if self.patch.contains(&0) || self.latent_channels == 0 || self.vocab_size == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("patch, channels, vocabulary and MLP width must be positive".into()));
        }
        self.rope()?;
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn patch_dim(&self) -> usize {
        self.patch.iter().product::<usize>() * self.latent_channels
    }

    pub fn rope(&self) -> Result<RopeConfig> {
        RopeConfig::for_head_dim(self.head_dim(), self.rope_base)
    }
}

/// Per-modality projection and MLP weights of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityWeights {
    pub wq: Array2<f32>,
    pub wk: Array2<f32>,
    pub wv: Array2<f32>,
    pub wo: Array2<f32>,
    pub w1: Array2<f32>,
    pub b1: Array2<f32>,
    pub w2: Array2<f32>,
    pub b2: Array2<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub text: ModalityWeights,
    pub video: ModalityWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiTWeights {
    pub patch_w: Array2<f32>,
    pub patch_b: Array2<f32>,
    pub time_w: Array2<f32>,
    pub time_b: Array2<f32>,
    pub vocab: Array2<f32>,
    pub blocks: Vec<BlockWeights>,
    pub out_w: Array2<f32>,
    pub out_b: Array2<f32>,
}

impl ModalityWeights {
    fn zeros(d: usize, h: usize) -> Self {
        Self {
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            w1: Array2::zeros((d, h)),
            b1: Array2::zeros((1, h)),
            w2: Array2::zeros((h, d)),
            b2: Array2::zeros((1, d)),
        }
    }

    fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<f32>)>) {
        for (n, t) in [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ] {
            out.push((format!("{prefix}.{n}"), t));
        }
    }

    fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<f32>)>) {
        for (n, t) in [
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ] {
            out.push((format!("{prefix}.{n}"), t));
        }
    }
}

impl DiTWeights {
    pub fn zeros(cfg: &DiTConfig) -> Self {
        let (d, h) = (cfg.dim, cfg.mlp_hidden);
        Self {
            patch_w: Array2::zeros((cfg.patch_dim(), d)),
            patch_b: Array2::zeros((1, d)),
            time_w: Array2::zeros((cfg.time_features, d)),
            time_b: Array2::zeros((1, d)),
            vocab: Array2::zeros((cfg.vocab_size, d)),
            blocks: (0..cfg.blocks)
                .map(|_| BlockWeights {
                    text: ModalityWeights::zeros(d, h),
                    video: ModalityWeights::zeros(d, h),
                })
                .collect(),
            out_w: Array2::zeros((d, cfg.patch_dim())),
            out_b: Array2::zeros((1, cfg.patch_dim())),
        }
    }

    /// All tensors in a fixed order with stable names.
    pub fn named(&self) -> Vec<(String, &Array2<f32>)> {
        let mut out = vec![
            ("patch.w".to_string(), &self.patch_w),
            ("patch.b".to_string(), &self.patch_b),
            ("time.w".to_string(), &self.time_w),
            ("time.b".to_string(), &self.time_b),
            ("vocab".to_string(), &self.vocab),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            b.text.named(&format!("blocks.{i}.text"), &mut out);
            b.video.named(&format!("blocks.{i}.video"), &mut out);
        }
        out.push(("out.w".to_string(), &self.out_w));
        out.push(("out.b".to_string(), &self.out_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Array2<f32>)> {
        let mut out = vec![
            ("patch.w".to_string(), &mut self.patch_w),
            ("patch.b".to_string(), &mut self.patch_b),
            ("time.w".to_string(), &mut self.time_w),
            ("time.b".to_string(), &mut self.time_b),
            ("vocab".to_string(), &mut self.vocab),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.text.named_mut(&format!("blocks.{i}.text"), &mut out);
            b.video.named_mut(&format!("blocks.{i}.video"), &mut out);
        }
        out.push(("out.w".to_string(), &mut self.out_w));
        out.push(("out.b".to_string(), &mut self.out_b));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Fixed sinusoidal features of a scalar position.
pub fn sinusoid(pos: f32, features: usize) -> Array1<f32> {
    let half = features / 2;
    let mut out = Array1::zeros(features);
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let a = pos as f64 * freq;
        out[i] = a.sin() as f32;
        out[half + i] = a.cos() as f32;
    }
    out
}

/// Row-wise layer norm without affine parameters. Returns the normalized rows
/// and each row's inverse standard deviation.
pub fn layer_norm(x: &ArrayView2<f32>) -> (Array2<f32>, Vec<f32>) {
    let d = x.ncols() as f32;
    let mut y = x.to_owned();
    let mut inv = Vec::with_capacity(x.nrows());
    for mut row in y.rows_mut() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f32>() / d;
        let r = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * r);
        inv.push(r);
    }
    (y, inv)
}

const GELU_C: f32 = 0.797_884_6; // sqrt(2 / pi)

pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f32) -> f32 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// `x W + b` where `b` is a `1 x n` row.
pub fn linear(x: &ArrayView2<f32>, w: &Array2<f32>, b: Option<&Array2<f32>>) -> Array2<f32> {
    let mut y = x.dot(w);
    if let Some(b) = b {
        y += &b.row(0);
    }
    y
}

/// Applies per-modality weights to the text rows `[..split]` and video rows `[split..]`.
pub fn linear_split(
    x: &ArrayView2<f32>,
    split: usize,
    pick: impl Fn(&ModalityWeights) -> (&Array2<f32>, Option<&Array2<f32>>),
    block: &BlockWeights,
) -> Array2<f32> {
    let (wt, bt) = pick(&block.text);
    let (wv, bv) = pick(&block.video);
    let top = linear(&x.slice(s![..split, ..]), wt, bt);
    let bot = linear(&x.slice(s![split.., ..]), wv, bv);
    ndarray::concatenate(Axis(0), &[top.view(), bot.view()]).expect("same width")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiTModel {
    pub config: DiTConfig,
    pub weights: DiTWeights,
}

impl DiTModel {
    /// Deterministic random initialization from `config.seed`.
    pub fn new(config: DiTConfig) -> Result<Self> {
        config.validate()?;
        let mut weights = DiTWeights::zeros(&config);
        let seed = config.seed;
        for (i, (name, t)) in weights.named_mut().into_iter().enumerate() {
            let fan_in = t.nrows() as f32;
            let std = if name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") {
                0.0
            } else if name == "vocab" {
                1.0
            } else if name == "out.w" {
                0.02
            } else if name.ends_with(".wo") || name.ends_with(".w2") {
                0.5 / fan_in.sqrt()
            } else {
                1.0 / fan_in.sqrt()
            };
            if std > 0.0 {
                let mut r = rng::stream(seed, &[rng::TAG_INIT, i as u64]);
                let v = rng::gaussian_vec(&mut r, t.len());
                for (dst, src) in t.iter_mut().zip(v) {
                    *dst = src * std;
                }
            }
        }
        Ok(Self { config, weights })
    }

    pub fn from_weights(config: DiTConfig, weights: DiTWeights) -> Result<Self> {
        config.validate()?;
        let reference = DiTWeights::zeros(&config);
        for ((n, a), (_, b)) in reference.named().iter().zip(weights.named()) {
            if a.dim() != b.dim() {
                return Err(Error::Shape(format!("weight {n} has shape {:?}, expected {:?}", b.dim(), a.dim())));
            }
        }
        if !weights.is_finite() {
            return Err(Error::InvalidValue("non-finite weights".into()));
        }
        Ok(Self { config, weights })
    }

    pub fn rope(&self) -> RopeConfig {
        self.config.rope().expect("validated at construction")
    }

    pub fn time_embedding(&self, timestep: usize) -> Array1<f32> {
        let f = sinusoid(timestep as f32, self.config.time_features);
        let mut e = f.dot(&self.weights.time_w);
        e += &self.weights.time_b.row(0);
        e
    }

    /// Initial residual stream `[text; video]` plus the video token grid.
    pub(crate) fn embed(&self, x: &LatentClip, timestep: usize, text_ids: &[usize]) -> Result<Embedded> {
        text::check_ids(text_ids, self.config.vocab_size)?;
        if x.channels() != self.config.latent_channels {
            return Err(Error::Shape(format!(
                "latent has {} channels, model expects {}",
                x.channels(),
                self.config.latent_channels
            )));
        }
        let patches = patchify(x, self.config.patch)?;
        let temb = self.time_embedding(timestep);
        let d = self.config.dim;
        let s = text_ids.len();
        let n = patches.tokens.nrows();
        let mut h = Array2::<f32>::zeros((s + n, d));
        for (i, &id) in text_ids.iter().enumerate() {
            let mut row = h.row_mut(i);
            row.assign(&self.weights.vocab.row(id));
            row += &sinusoid(i as f32, d);
        }
        let vid = linear(&patches.tokens.view(), &self.weights.patch_w, Some(&self.weights.patch_b));
        h.slice_mut(s![s.., ..]).assign(&vid);
        h += &temb;
        Ok(Embedded {
            h,
            text_len: s,
            patches_tokens: patches.tokens,
            token_grid: patches.token_grid,
            positions: patches.positions,
        })
    }

    /// Predicted noise for `x` at `timestep`, with every block's attention
    /// routed through `processor`. `step` is forwarded to the processor as the
    /// cache lookup key.
    pub fn forward(
        &self,
        x: &LatentClip,
        timestep: usize,
        text_ids: &[usize],
        step: usize,
        processor: &mut dyn AttentionProcessor,
    ) -> Result<LatentClip> {
        let emb = self.embed(x, timestep, text_ids)?;
        let rope = RopeTable::from_grid(&self.rope(), &emb.positions);
        let s = emb.text_len;
        let mut h = emb.h;
        for (bi, bw) in self.weights.blocks.iter().enumerate() {
            let (a, _) = layer_norm(&h.view());
            let q = linear_split(&a.view(), s, |m| (&m.wq, None), bw);
            let k = linear_split(&a.view(), s, |m| (&m.wk, None), bw);
            let v = linear_split(&a.view(), s, |m| (&m.wv, None), bw);
            let inputs = AttentionInputs {
                step,
                block: bi,
                heads: self.config.heads,
                text_q: q.slice(s![..s, ..]),
                text_k: k.slice(s![..s, ..]),
                text_v: v.slice(s![..s, ..]),
                video_q: q.slice(s![s.., ..]),
                video_k: k.slice(s![s.., ..]),
                video_v: v.slice(s![s.., ..]),
                video_rope: &rope,
            };
            let o = processor.process(&inputs)?;
            if o.dim() != h.dim() {
                return Err(Error::Shape(format!("processor returned {:?}, expected {:?}", o.dim(), h.dim())));
            }
            h += &linear_split(&o.view(), s, |m| (&m.wo, None), bw);
            let (m, _) = layer_norm(&h.view());
            let mut z = linear_split(&m.view(), s, |w| (&w.w1, Some(&w.b1)), bw);
            z.mapv_inplace(gelu);
            h += &linear_split(&z.view(), s, |w| (&w.w2, Some(&w.b2)), bw);
        }
        let (nv, _) = layer_norm(&h.slice(s![s.., ..]));
        let y = linear(&nv.view(), &self.weights.out_w, Some(&self.weights.out_b));
        unpatchify(&y, emb.token_grid, self.config.patch, self.config.latent_channels)
    }

    /// Token positions of the video grid for a latent grid.
    pub fn video_positions(&self, latent_grid: [usize; 3]) -> Result<Vec<[usize; 3]>> {
        Ok(token_positions(token_grid(latent_grid, self.config.patch)?))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        let p = dir.join("model.toml");
        std::fs::write(&p, cfg).map_err(|e| Error::io(&p, e))?;
        let mut m = BTreeMap::new();
        for (name, t) in self.weights.named() {
            m.insert(name, TensorFile::new(vec![t.nrows(), t.ncols()], t.iter().copied().collect())?);
        }
        write_bundle(dir.join("weights.bundle"), &m)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let p = dir.join("model.toml");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let config: DiTConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        let mut bundle = read_bundle(dir.join("weights.bundle"))?;
        let mut weights = DiTWeights::zeros(&config);
        for (name, t) in weights.named_mut() {
            let tf = bundle
                .remove(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint missing {name}")))?;
            if tf.dims != [t.nrows(), t.ncols()] {
                return Err(Error::Shape(format!("checkpoint tensor {name} has dims {:?}", tf.dims)));
            }
            t.as_slice_mut().expect("owned").copy_from_slice(&tf.data);
        }
        if let Some(extra) = bundle.keys().next() {
            return Err(Error::Format(format!("unexpected checkpoint tensor {extra}")));
        }
        Self::from_weights(config, weights)
    }
}

pub(crate) struct Embedded {
    pub h: Array2<f32>,
    pub text_len: usize,
    pub patches_tokens: Array2<f32>,
    pub token_grid: [usize; 3],
    pub positions: Vec<[usize; 3]>,
}
