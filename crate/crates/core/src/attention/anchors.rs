//! Seeded anchor selection over the source token grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Per-pool keep fractions for anchor extended attention.
///
/// `keep_fg` applies to tokens inside the source-object mask, `keep_bg` to
/// the rest. Anchors are re-drawn for every (sampling step, block) pair and
/// shared across the heads of a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorSelection {
    pub keep_fg: f64,
    pub keep_bg: f64,
    pub seed: u64,
}

impl Default for AnchorSelection {
    fn default() -> Self {
        Self {
            keep_fg: 0.30,
            keep_bg: 0.05,
            seed: 0,
        }
    }
}

impl AnchorSelection {
    pub fn new(keep_fg: f64, keep_bg: f64, seed: u64) -> Result<Self> {
        let s = Self { keep_fg, keep_bg, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("keep_fg", self.keep_fg), ("keep_bg", self.keep_bg)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `round(fraction * pool)` with halves rounded up.
pub fn anchor_count(fraction: f64, pool: usize) -> usize {
    ((fraction * pool as f64) + 0.5).floor().min(pool as f64) as usize
}

/// First `count` entries of a seeded partial Fisher-Yates shuffle of `pool`.
fn shuffle_prefix(mut pool: Vec<usize>, count: usize, seed: u64, tags: &[u64]) -> Vec<usize> {
    let mut r = rng::stream(seed, tags);
    let n = pool.len();
    for i in 0..count.min(n) {
        let j = i + rng::below(&mut r, n - i);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

/// Selects anchor token indices (ascending) for one (step, block).
pub fn select_anchors(source_mask: &[bool], sel: &AnchorSelection, step: usize, block: usize) -> Result<Vec<usize>> {
    sel.validate()?;
    let (fg, bg): (Vec<usize>, Vec<usize>) = (0..source_mask.len()).partition(|&i| source_mask[i]);
    let n_fg = anchor_count(sel.keep_fg, fg.len());
    let n_bg = anchor_count(sel.keep_bg, bg.len());
    let tags = |pool: u64| [rng::TAG_ANCHOR, step as u64, block as u64, pool];
    let mut picked = shuffle_prefix(fg, n_fg, sel.seed, &tags(0));
    picked.extend(shuffle_prefix(bg, n_bg, sel.seed, &tags(1)));
    picked.sort_unstable();
    Ok(picked)
}
