//! Attention processors that every transformer block routes through.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::anchors::{select_anchors, AnchorSelection};
use super::cache::AttentionCache;
use super::kernel::multi_head;
use crate::dit::rope::RopeTable;
use crate::error::{Error, Result};

/// Everything a block hands to its attention processor. Video queries and
/// keys arrive before RoPE; text tokens are never rotated.
pub struct AttentionInputs<'a> {
    /// Sampling-step key used to look up cached source features.
    pub step: usize,
    pub block: usize,
    pub heads: usize,
    pub text_q: ArrayView2<'a, f32>,
    pub text_k: ArrayView2<'a, f32>,
    pub text_v: ArrayView2<'a, f32>,
    pub video_q: ArrayView2<'a, f32>,
    pub video_k: ArrayView2<'a, f32>,
    pub video_v: ArrayView2<'a, f32>,
    pub video_rope: &'a RopeTable,
}

impl AttentionInputs<'_> {
    /// Joint `[text; video]` queries, keys and values with RoPE applied to video rows.
    pub fn joint_qkv(&self) -> Result<(Array2<f32>, Array2<f32>, Array2<f32>)> {
        let vq = self.video_rope.apply(&self.video_q.to_owned())?;
        let vk = self.video_rope.apply(&self.video_k.to_owned())?;
        let cat = |a: ArrayView2<f32>, b: ArrayView2<f32>| {
            concatenate(Axis(0), &[a, b]).map_err(|e| Error::Shape(e.to_string()))
        };
        Ok((
            cat(self.text_q.view(), vq.view())?,
            cat(self.text_k.view(), vk.view())?,
            cat(self.text_v.view(), self.video_v.view())?,
        ))
    }
}

/// Computes the joint attention output rows `[text; video]` for one block.
pub trait AttentionProcessor {
    fn process(&mut self, inputs: &AttentionInputs<'_>) -> Result<Array2<f32>>;
}

/// Joint attention with extra key/value rows appended after the joint keys.
pub fn joint_attention_with_extension(
    inputs: &AttentionInputs<'_>,
    k_ext: ArrayView2<f32>,
    v_ext: ArrayView2<f32>,
) -> Result<Array2<f32>> {
    let (q, k, v) = inputs.joint_qkv()?;
    if k_ext.nrows() != v_ext.nrows() {
        return Err(Error::Shape("unpaired extension keys/values".into()));
    }
    let kk = concatenate(Axis(0), &[k.view(), k_ext]).map_err(|e| Error::Shape(e.to_string()))?;
    let vv = concatenate(Axis(0), &[v.view(), v_ext]).map_err(|e| Error::Shape(e.to_string()))?;
    multi_head(&q.view(), &kk.view(), &vv.view(), inputs.heads)
}

/// Plain joint text/video attention.
#[derive(Debug, Default, Clone, Copy)]
pub struct StandardProcessor;

impl AttentionProcessor for StandardProcessor {
    fn process(&mut self, inputs: &AttentionInputs<'_>) -> Result<Array2<f32>> {
        let w = inputs.video_k.ncols();
        let empty = Array2::<f32>::zeros((0, w));
        joint_attention_with_extension(inputs, empty.view(), empty.view())
    }
}

/// Standard attention that records the video keys/values of every block.
pub struct CaptureProcessor<'c> {
    pub cache: &'c mut AttentionCache,
}

impl AttentionProcessor for CaptureProcessor<'_> {
    fn process(&mut self, inputs: &AttentionInputs<'_>) -> Result<Array2<f32>> {
        self.cache.insert(
            inputs.step,
            inputs.block,
            inputs.video_k.to_owned(),
            inputs.video_v.to_owned(),
        )?;
        StandardProcessor.process(inputs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Standard,
    FullExtended,
    MaskedExtended,
    AnchorExtended,
}

impl AttentionMode {
    pub fn needs_cache(self) -> bool {
        self != AttentionMode::Standard
    }
    pub fn needs_mask(self) -> bool {
        matches!(self, AttentionMode::MaskedExtended | AttentionMode::AnchorExtended)
    }
}

/// Source-extended attention: full, masked (region-restricted) or anchor
/// (sparse seeded subset of foreground and background source tokens).
pub struct ExtendedProcessor<'a> {
    mode: AttentionMode,
    cache: Option<&'a AttentionCache>,
    source_mask: Option<Vec<bool>>,
    selection: AnchorSelection,
    source_rope: Option<RopeTable>,
    /// When false the processor behaves exactly like [`StandardProcessor`].
    pub active: bool,
}

impl<'a> ExtendedProcessor<'a> {
    pub fn new(
        mode: AttentionMode,
        cache: Option<&'a AttentionCache>,
        source_mask: Option<Vec<bool>>,
        selection: AnchorSelection,
        rope: &crate::dit::rope::RopeConfig,
    ) -> Result<Self> {
        selection.validate()?;
        if mode.needs_cache() && cache.is_none() {
            return Err(Error::Processor(format!("{mode:?} attention requires a cache")));
        }
        if mode.needs_mask() {
            let m = source_mask
                .as_ref()
                .ok_or_else(|| Error::Processor(format!("{mode:?} attention requires a source mask")))?;
            let n = cache.map(|c| c.positions.len()).unwrap_or(0);
            if m.len() != n {
                return Err(Error::Shape(format!("source mask has {} tokens, cache has {n}", m.len())));
            }
        }
        let source_rope = cache.map(|c| c.rope_table(rope));
        Ok(Self {
            mode,
            cache,
            source_mask,
            selection,
            source_rope,
            active: true,
        })
    }

    pub fn standard() -> Self {
        Self {
            mode: AttentionMode::Standard,
            cache: None,
            source_mask: None,
            selection: AnchorSelection::default(),
            source_rope: None,
            active: true,
        }
    }

    pub fn mode(&self) -> AttentionMode {
        self.mode
    }

    /// Source token indices attended to at (step, block), ascending.
    pub fn selected(&self, step: usize, block: usize) -> Result<Vec<usize>> {
        let n = self.cache.map(|c| c.positions.len()).unwrap_or(0);
        match self.mode {
            AttentionMode::Standard => Ok(Vec::new()),
            AttentionMode::FullExtended => Ok((0..n).collect()),
            AttentionMode::MaskedExtended => {
                let sel = AnchorSelection {
                    keep_fg: 1.0,
                    keep_bg: 0.0,
                    ..self.selection
                };
                select_anchors(self.source_mask.as_deref().unwrap_or(&[]), &sel, step, block)
            }
            AttentionMode::AnchorExtended => {
                select_anchors(self.source_mask.as_deref().unwrap_or(&[]), &self.selection, step, block)
            }
        }
    }
}

impl AttentionProcessor for ExtendedProcessor<'_> {
    fn process(&mut self, inputs: &AttentionInputs<'_>) -> Result<Array2<f32>> {
        let (cache, rope) = match (self.active, self.mode, self.cache, &self.source_rope) {
            (true, m, Some(c), Some(r)) if m != AttentionMode::Standard => (c, r),
            _ => return StandardProcessor.process(inputs),
        };
        if cache.positions.len() != inputs.video_k.nrows() {
            return Err(Error::Shape(format!(
                "cache covers {} tokens, target has {}",
                cache.positions.len(),
                inputs.video_k.nrows()
            )));
        }
        let entry = cache.get(inputs.step, inputs.block)?;
        let idx = self.selected(inputs.step, inputs.block)?;
        let k_sel = entry.keys.select(Axis(0), &idx);
        let v_sel = entry.values.select(Axis(0), &idx);
        let k_ext = rope.select(&idx).apply(&k_sel)?;
        joint_attention_with_extension(inputs, k_ext.view(), v_sel.view())
    }
}

impl AttentionProcessor for Box<dyn AttentionProcessor + '_> {
    fn process(&mut self, inputs: &AttentionInputs<'_>) -> Result<Array2<f32>> {
        (**self).process(inputs)
    }
}
