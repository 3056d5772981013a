//! SSIM restricted to windows that avoid an excluded region.

use crate::error::{Error, Result};
use crate::tensor::{PixelMask, VideoClip};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let c = (WINDOW / 2) as f64;
    let mut t = [0.0; WINDOW];
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = t.iter().sum();
    t.map(|v| v / s)
}

/// Valid-mode separable filter of an `h x w` plane.
fn filter(plane: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - WINDOW, w + 1 - WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| taps[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| taps[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Per-window SSIM of one channel plane, valid mode.
fn ssim_map(a: &[f64], b: &[f64], h: usize, w: usize) -> Vec<f64> {
    let taps = gaussian_taps();
    let c1 = (K1 * 1.0).powi(2);
    let c2 = (K2 * 1.0).powi(2);
    let mu_a = filter(a, h, w, &taps);
    let mu_b = filter(b, h, w, &taps);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let e_aa = filter(&aa, h, w, &taps);
    let e_bb = filter(&bb, h, w, &taps);
    let e_ab = filter(&ab, h, w, &taps);
    (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect()
}

/// Window validity: the full footprint avoids `excluded`.
fn clean_windows(excluded: &[u8], h: usize, w: usize) -> Vec<bool> {
    let (oh, ow) = (h + 1 - WINDOW, w + 1 - WINDOW);
    // Summed-area table of excluded pixels.
    let mut sat = vec![0u32; (h + 1) * (w + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] =
                excluded[y * w + x] as u32 + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let (y1, x1) = (y + WINDOW, x + WINDOW);
            let s = sat[y1 * (w + 1) + x1] + sat[y * (w + 1) + x] - sat[y * (w + 1) + x1] - sat[y1 * (w + 1) + x];
            out.push(s == 0);
        }
    }
    out
}

/// Per-frame masked SSIM; `None` for frames without a clean window.
pub fn masked_ssim_frames(edited: &VideoClip, original: &VideoClip, excluded: &PixelMask) -> Result<Vec<Option<f64>>> {
    if !edited.same_dims(original) {
        return Err(Error::Shape(format!("{:?} vs {:?}", edited.dims(), original.dims())));
    }
    let [nf, h, w, ch] = edited.dims();
    if excluded.dims() != [nf, h, w] {
        return Err(Error::Shape(format!("mask {:?} vs video {:?}", excluded.dims(), [nf, h, w])));
    }
    if h < WINDOW || w < WINDOW {
        return Err(Error::Shape(format!("frames {h}x{w} smaller than the {WINDOW}x{WINDOW} window")));
    }
    let mut out = Vec::with_capacity(nf);
    for f in 0..nf {
        let valid = clean_windows(excluded.frame(f), h, w);
        let n = valid.iter().filter(|&&v| v).count();
        if n == 0 {
            out.push(None);
            continue;
        }
        let (fa, fb) = (edited.frame(f), original.frame(f));
        let mut total = 0.0;
        for c in 0..ch {
            let a: Vec<f64> = fa.iter().skip(c).step_by(ch).map(|&v| v as f64).collect();
            let b: Vec<f64> = fb.iter().skip(c).step_by(ch).map(|&v| v as f64).collect();
            let map = ssim_map(&a, &b, h, w);
            total += map.iter().zip(&valid).filter(|(_, &v)| v).map(|(s, _)| s).sum::<f64>() / n as f64;
        }
        out.push(Some(total / ch as f64));
    }
    Ok(out)
}

/// SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03, unit range),
/// averaged over windows lying entirely outside `excluded`, per frame and
/// channel, then over frames that have such windows.
pub fn masked_ssim(edited: &VideoClip, original: &VideoClip, excluded: &PixelMask) -> Result<f64> {
    let frames = masked_ssim_frames(edited, original, excluded)?;
    let vals: Vec<f64> = frames.into_iter().flatten().collect();
    if vals.is_empty() {
        return Err(Error::EmptyRegion("no SSIM window lies outside the excluded region".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}
