//! Linear toy VAE: block-average encoder, nearest-neighbour decoder.

use serde::{Deserialize, Serialize};

use super::{LatentClip, LatentMask, PixelMask, VideoClip};
use crate::error::{Error, Result};

/// Temporal and spatial downsampling factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeFactors {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Default for VaeFactors {
    fn default() -> Self {
        Self { t: 2, h: 4, w: 4 }
    }
}

impl VaeFactors {
    pub fn new(t: usize, h: usize, w: usize) -> Self {
        Self { t, h, w }
    }

    pub fn volume(&self) -> usize {
        self.t * self.h * self.w
    }

    /// Latent grid for a video grid, or a dimension-mismatch error.
    pub fn latent_grid(&self, frames: usize, height: usize, width: usize) -> Result<[usize; 3]> {
        if self.t == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::Shape("VAE factors must be positive".into()));
        }
        if frames % self.t != 0 || height % self.h != 0 || width % self.w != 0 {
            return Err(Error::Shape(format!(
                "video {frames}x{height}x{width} not divisible by VAE factors ({}, {}, {})",
                self.t, self.h, self.w
            )));
        }
        Ok([frames / self.t, height / self.h, width / self.w])
    }
}

/// Block means of a `[frames][h][w][c]` buffer.
fn block_mean(data: &[f32], dims: [usize; 4], f: VaeFactors) -> Result<(Vec<f32>, [usize; 3])> {
    let [frames, height, width, ch] = dims;
    let [lf, lh, lw] = f.latent_grid(frames, height, width)?;
    let mut acc = vec![0f64; lf * lh * lw * ch];
    for fr in 0..frames {
        let t = fr / f.t;
        for y in 0..height {
            let ly = y / f.h;
            let row = (fr * height + y) * width;
            for x in 0..width {
                let lx = x / f.w;
                let src = (row + x) * ch;
                let dst = ((t * lh + ly) * lw + lx) * ch;
                for c in 0..ch {
                    acc[dst + c] += data[src + c] as f64;
                }
            }
        }
    }
    let inv = 1.0 / f.volume() as f64;
    Ok((acc.into_iter().map(|v| (v * inv) as f32).collect(), [lf, lh, lw]))
}

pub fn vae_encode(video: &VideoClip, factors: VaeFactors) -> Result<LatentClip> {
    let (data, [lf, lh, lw]) = block_mean(video.data(), video.dims(), factors)?;
    LatentClip::new(lf, lh, lw, video.channels(), data)
}

/// Nearest-neighbour upsampling; values are clamped to the pixel range.
pub fn vae_decode(latent: &LatentClip, factors: VaeFactors) -> VideoClip {
    let [lf, lh, lw, ch] = latent.dims();
    let (frames, height, width) = (lf * factors.t, lh * factors.h, lw * factors.w);
    let mut data = Vec::with_capacity(frames * height * width * ch);
    let src = latent.data();
    for fr in 0..frames {
        let t = fr / factors.t;
        for y in 0..height {
            let ly = y / factors.h;
            for x in 0..width {
                let i = ((t * lh + ly) * lw + x / factors.w) * ch;
                data.extend(src[i..i + ch].iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
    }
    VideoClip::new(frames, height, width, ch, data).expect("decoded video is well formed")
}

/// Deterministic 1-D two-means. Returns per-value labels (true = upper cluster).
///
/// Centroids start at the minimum and maximum. A value equidistant from both
/// centroids, or a degenerate all-equal input, is labelled foreground when
/// it is at least 0.5.
pub fn two_means_partition(values: &[f32]) -> Vec<bool> {
    if values.is_empty() {
        return Vec::new();
    }
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v as f64), h.max(v as f64)));
    if lo == hi {
        return vec![lo >= 0.5; values.len()];
    }
    let assign = |lo: f64, hi: f64| -> Vec<bool> {
        values
            .iter()
            .map(|&v| {
                let v = v as f64;
                let (dl, dh) = ((v - lo).abs(), (v - hi).abs());
                if dl == dh {
                    v >= 0.5
                } else {
                    dh < dl
                }
            })
            .collect()
    };
    let mut labels = assign(lo, hi);
    for _ in 0..100 {
        let (mut s0, mut n0, mut s1, mut n1) = (0f64, 0usize, 0f64, 0usize);
        for (&v, &l) in values.iter().zip(&labels) {
            if l {
                s1 += v as f64;
                n1 += 1;
            } else {
                s0 += v as f64;
                n0 += 1;
            }
        }
        if n0 > 0 {
            lo = s0 / n0 as f64;
        }
        if n1 > 0 {
            hi = s1 / n1 as f64;
        }
        let next = assign(lo, hi);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

pub fn latent_mask_from_pixel_mask(mask: &PixelMask, factors: VaeFactors) -> Result<LatentMask> {
    let [frames, height, width] = mask.dims();
    let (cells, [lf, lh, lw]) = block_mean(&mask.as_float(), [frames, height, width, 1], factors)?;
    let labels = two_means_partition(&cells);
    LatentMask::new(lf, lh, lw, labels.into_iter().map(u8::from).collect())
}

/// Nearest-neighbour expansion of a latent mask to pixel resolution.
pub fn latent_mask_to_pixels(mask: &LatentMask, factors: VaeFactors) -> PixelMask {
    let [lf, lh, lw] = mask.grid();
    PixelMask::from_fn(lf * factors.t, lh * factors.h, lw * factors.w, |f, y, x| {
        mask.get(f / factors.t, y / factors.h, x / factors.w)
    })
}
