//! Iterative refinement with anchor extended attention, latent mask
//! extraction and residual compositing.

use serde::{Deserialize, Serialize};

use crate::attention::{AnchorSelection, AttentionCache, AttentionMode, ExtendedProcessor};
use crate::diffusion::{ddim_sample_with, noise_to_level, sdedit, NoiseSchedule, RunManifest, SampleOptions};
use crate::dit::text::tokenize;
use crate::dit::DiTModel;
use crate::error::{Error, Result};
use crate::planner::{Planner, PlannerRequest, ScenePlan};
use crate::rng;
use crate::segment::Segmenter;
use crate::tensor::{
    latent_mask_from_pixel_mask, latent_mask_to_pixels, vae_decode, vae_encode, LatentClip, LatentMask, PixelMask,
    VaeFactors, VideoClip,
};

mod ablation;

pub use ablation::{run_ablation, AblationMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EditConfig {
    /// Noise levels as fractions of `T`, strictly descending in (0, 1].
    pub ladder: Vec<f64>,
    /// Anchors are active at levels strictly above `tau_a * T`.
    pub tau_a: f64,
    pub attention: AttentionMode,
    pub anchors: AnchorSelection,
    pub vae: VaeFactors,
    pub noise_seed: u64,
    /// Copy source pixels back outside the decoded edit mask.
    pub restore_unmasked_pixels: bool,
    /// Clamp clean-sample predictions to the pixel range while sampling.
    pub clamp_x0: bool,
    /// Classifier-free guidance scale; 1 samples with the prompt alone.
    pub guidance_scale: f64,
    /// When the edit object is not found, keep the previous residual instead
    /// of recomputing it under the previous mask.
    pub keep_residual_on_miss: bool,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            ladder: vec![0.90, 0.75, 0.60, 0.45, 0.30],
            tau_a: 0.50,
            attention: AttentionMode::AnchorExtended,
            anchors: AnchorSelection::default(),
            vae: VaeFactors::default(),
            noise_seed: 0,
            restore_unmasked_pixels: true,
            clamp_x0: true,
            guidance_scale: 10.0,
            keep_residual_on_miss: true,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::Config("noise ladder is empty".into()));
        }
        for &f in &self.ladder {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("ladder level {f} outside (0, 1]")));
            }
        }
        if self.ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!("ladder {:?} is not strictly descending", self.ladder)));
        }
        if !(0.0..=1.0).contains(&self.tau_a) {
            return Err(Error::Config(format!("tau_a {} outside [0, 1]", self.tau_a)));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 0.0) {
            return Err(Error::Config(format!("guidance_scale {} must be finite and >= 0", self.guidance_scale)));
        }
        self.anchors.validate()
    }

    /// Ladder as integer timesteps, each at least 1.
    pub fn levels(&self, schedule: &NoiseSchedule) -> Vec<usize> {
        self.ladder.iter().map(|&f| schedule.level(f).max(1)).collect()
    }

    pub fn gate(&self, schedule: &NoiseSchedule) -> usize {
        schedule.level(self.tau_a)
    }

    /// Sampler settings. Clean-sample predictions are clamped to the pixel
    /// range, which latents share as block means of pixels.
    pub fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            x0_range: self.clamp_x0.then_some([0.0, 1.0]),
            guidance_scale: self.guidance_scale,
        }
    }
}

/// One refinement iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub timestep: usize,
    pub anchors_active: bool,
    /// Decoded sample of this iteration.
    pub decoded: VideoClip,
    /// Decoded composite `x_orig + x_res` after this iteration's update.
    pub composite: VideoClip,
    /// Segmentation of the edit object in `decoded`.
    pub segmentation: PixelMask,
    /// False when the edit object was not found and the previous mask was kept.
    pub mask_found: bool,
}

#[derive(Debug, Clone)]
pub struct EditResult {
    pub video: VideoClip,
    pub latent: LatentClip,
    pub mask_latent: LatentMask,
    /// `mask_latent` expanded to pixel resolution.
    pub mask_pixel: PixelMask,
    pub iterations: Vec<IterationRecord>,
    pub plan: ScenePlan,
    pub manifest: RunManifest,
}

/// Fixed inputs shared by every edit of one source clip.
pub struct EditContext<'a> {
    pub model: &'a DiTModel,
    pub schedule: &'a NoiseSchedule,
    /// Keys/values captured while inverting the source clip.
    pub cache: &'a AttentionCache,
    /// Segments the edit object in generated frames.
    pub segmenter: &'a dyn Segmenter,
    /// Segments the source objects; falls back to `segmenter`.
    pub source_segmenter: Option<&'a dyn Segmenter>,
}

/// `x_res = M (x_hat - x_orig)`, `x_comp = x_orig + x_res`.
///
/// The composite is selected per cell, so it equals `x_hat` inside the mask
/// and `x_orig` outside exactly.
pub fn residual_update(x_orig: &LatentClip, x_hat: &LatentClip, mask: &LatentMask) -> Result<(LatentClip, LatentClip)> {
    x_orig.check_same_shape(x_hat)?;
    if mask.grid() != x_orig.grid() {
        return Err(Error::Shape(format!(
            "mask grid {:?} vs latent grid {:?}",
            mask.grid(),
            x_orig.grid()
        )));
    }
    if let Some(v) = mask.data().iter().find(|&&v| v > 1) {
        return Err(Error::NonBinaryMask(format!("latent mask value {v}")));
    }
    let ch = x_orig.channels();
    let mut res = Vec::with_capacity(x_orig.len());
    let mut comp = Vec::with_capacity(x_orig.len());
    for (i, (&o, &h)) in x_orig.data().iter().zip(x_hat.data()).enumerate() {
        if mask.data()[i / ch] == 1 {
            res.push(h - o);
            comp.push(h);
        } else {
            res.push(0.0);
            comp.push(o);
        }
    }
    Ok((x_orig.with_data(res)?, x_orig.with_data(comp)?))
}

/// Union of the source-object segmentations, pooled to the token grid.
pub fn source_token_mask(
    video: &VideoClip,
    objects: &[String],
    segmenter: &dyn Segmenter,
    vae: VaeFactors,
    patch: [usize; 3],
) -> Result<LatentMask> {
    let [f, h, w, _] = video.dims();
    let mut pixels = PixelMask::zeros(f, h, w);
    for o in objects {
        pixels = pixels.union(&segmenter.segment(video, o)?)?;
    }
    latent_mask_from_pixel_mask(&pixels, vae)?.pool_any(patch)
}

fn plan_edit(planner: &dyn Planner, video: &VideoClip, instruction: &str, labels: &[String]) -> Result<ScenePlan> {
    let plan = planner.plan(&PlannerRequest::new(instruction, video, labels.to_vec())?)?;
    plan.validate()?;
    Ok(plan)
}

fn base_manifest(kind: &str, instruction: &str, plan: &ScenePlan, config: &EditConfig) -> Result<RunManifest> {
    RunManifest::new(kind)
        .seed("noise", config.noise_seed)
        .seed("anchors", config.anchors.seed)
        .prompt("instruction", instruction)
        .prompt("composition", &plan.composition_prompt)
        .prompt("edit_object", &plan.edit_object)
        .param("edit", config)
}

fn paste_back(decoded: &VideoClip, source: &VideoClip, mask: &PixelMask) -> Result<VideoClip> {
    if !decoded.same_dims(source) {
        return Err(Error::Shape("decoded and source videos differ in size".into()));
    }
    let ch = source.channels();
    let data = decoded
        .data()
        .iter()
        .zip(source.data())
        .enumerate()
        .map(|(i, (&d, &s))| if mask.data()[i / ch] == 1 { d } else { s })
        .collect();
    let [f, h, w, c] = source.dims();
    VideoClip::new(f, h, w, c, data)
}

fn finish(
    video: &VideoClip,
    latent: LatentClip,
    mask_latent: LatentMask,
    restore: bool,
    vae: VaeFactors,
) -> Result<(VideoClip, LatentClip, LatentMask, PixelMask)> {
    let mask_pixel = latent_mask_to_pixels(&mask_latent, vae);
    let decoded = vae_decode(&latent, vae);
    let out = if restore {
        paste_back(&decoded, video, &mask_pixel)?
    } else {
        decoded
    };
    Ok((out, latent, mask_latent, mask_pixel))
}

/// Full edit loop: plan, then refine the composite over the noise ladder.
pub fn edit(
    video: &VideoClip,
    instruction: &str,
    labels: &[String],
    config: &EditConfig,
    planner: &dyn Planner,
    ctx: &EditContext<'_>,
) -> Result<EditResult> {
    config.validate()?;
    let plan = plan_edit(planner, video, instruction, labels)?;
    let model = ctx.model;
    let schedule = ctx.schedule;
    let x_orig = vae_encode(video, config.vae)?;
    let text_ids = tokenize(&plan.composition_prompt);

    let rope = model.rope();
    let source_mask = if config.attention.needs_mask() {
        let seg = ctx.source_segmenter.unwrap_or(ctx.segmenter);
        let m = source_token_mask(video, &plan.original_objects, seg, config.vae, model.config.patch)?;
        Some(m.data().iter().map(|&v| v == 1).collect())
    } else {
        None
    };
    let cache = config.attention.needs_cache().then_some(ctx.cache);
    let mut processor = ExtendedProcessor::new(config.attention, cache, source_mask, config.anchors, &rope)?;

    let [lf, lh, lw] = x_orig.grid();
    let mut x_res = LatentClip::zeros_like(&x_orig);
    let mut mask = LatentMask::zeros(lf, lh, lw);
    let mut iterations = Vec::with_capacity(config.ladder.len());
    let gate = config.gate(schedule);
    for (i, &t) in config.levels(schedule).iter().enumerate() {
        let x_comp = x_orig.add(&x_res)?;
        let noisy = noise_to_level(schedule, &x_comp, t, rng::derive_seed(config.noise_seed, &[i as u64]))?;
        processor.active = t > gate;
        let x_hat = ddim_sample_with(
            model,
            schedule,
            &noisy,
            t,
            &text_ids,
            schedule.sample_steps(),
            &mut processor,
            &config.sample_options(),
        )?;
        let decoded = vae_decode(&x_hat, config.vae);
        let segmentation = ctx.segmenter.segment(&decoded, &plan.edit_object)?;
        let mask_found = !segmentation.is_empty();
        if mask_found {
            mask = latent_mask_from_pixel_mask(&segmentation, config.vae)?;
        } else {
            log::warn!(
                "iteration {i} (t = {t}): `{}` not found, keeping the previous {}",
                plan.edit_object,
                if config.keep_residual_on_miss { "residual" } else { "mask" }
            );
        }
        if mask_found || !config.keep_residual_on_miss {
            x_res = residual_update(&x_orig, &x_hat, &mask)?.0;
        }
        iterations.push(IterationRecord {
            timestep: t,
            anchors_active: processor.active,
            decoded,
            composite: vae_decode(&x_orig.add(&x_res)?, config.vae),
            segmentation,
            mask_found,
        });
    }

    let (out, latent, mask_latent, mask_pixel) =
        finish(video, x_orig.add(&x_res)?, mask, config.restore_unmasked_pixels, config.vae)?;
    let manifest = base_manifest("edit", instruction, &plan, config)?;
    Ok(EditResult {
        video: out,
        latent,
        mask_latent,
        mask_pixel,
        iterations,
        plan,
        manifest,
    })
}

/// Single noise-and-denoise pass with standard attention.
pub fn edit_sdedit(
    video: &VideoClip,
    instruction: &str,
    labels: &[String],
    strength: f64,
    config: &EditConfig,
    planner: &dyn Planner,
    ctx: &EditContext<'_>,
) -> Result<EditResult> {
    let plan = plan_edit(planner, video, instruction, labels)?;
    let x_orig = vae_encode(video, config.vae)?;
    let text_ids = tokenize(&plan.composition_prompt);
    let seed = rng::derive_seed(config.noise_seed, &[0]);
    let latent = sdedit(ctx.model, ctx.schedule, &x_orig, strength, &text_ids, seed, &config.sample_options())?;
    let out = vae_decode(&latent, config.vae);
    let segmentation = ctx.segmenter.segment(&out, &plan.edit_object)?;
    let mask_latent = if segmentation.is_empty() {
        let [lf, lh, lw] = x_orig.grid();
        LatentMask::zeros(lf, lh, lw)
    } else {
        latent_mask_from_pixel_mask(&segmentation, config.vae)?
    };
    let mask_pixel = latent_mask_to_pixels(&mask_latent, config.vae);
    let manifest = base_manifest("sdedit", instruction, &plan, config)?.param("strength", &strength)?;
    Ok(EditResult {
        video: out,
        latent,
        mask_latent,
        mask_pixel,
        iterations: Vec::new(),
        plan,
        manifest,
    })
}

/// Reconstruction attempt from pure noise at `T` under a given attention mode.
pub fn sample_from_noise(
    ctx: &EditContext<'_>,
    shape_like: &LatentClip,
    text: &str,
    processor: &mut ExtendedProcessor<'_>,
    seed: u64,
    opts: &SampleOptions,
) -> Result<LatentClip> {
    let noise = crate::diffusion::gaussian_like(shape_like, seed);
    let t = ctx.schedule.max_t();
    ddim_sample_with(
        ctx.model,
        ctx.schedule,
        &noise,
        t,
        &tokenize(text),
        ctx.schedule.sample_steps(),
        processor,
        opts,
    )
}
