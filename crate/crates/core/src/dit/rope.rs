//! Three-axis rotary position embedding.
//!
//! A head vector of width `t + h + w` is split into three contiguous
//! segments, one per axis. Within a segment of width `n`, pair `(2i, 2i+1)`
//! is rotated by `pos * base^(-2i/n)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RopeConfig {
    pub base: f32,
    /// Head-vector width allotted to the (t, h, w) axes.
    pub axes: [usize; 3],
}

impl RopeConfig {
    pub fn for_head_dim(head_dim: usize, base: f32) -> Result<Self> {
        if head_dim % 6 != 0 {
            return Err(Error::Shape(format!("head dim {head_dim} not divisible by 6")));
        }
        let a = head_dim / 3;
        Self::new(base, [a, a, a])
    }

    pub fn new(base: f32, axes: [usize; 3]) -> Result<Self> {
        if axes.iter().any(|a| a % 2 != 0) {
            return Err(Error::Shape(format!("RoPE axis dims {axes:?} must be even")));
        }
        if !(base > 1.0) {
            return Err(Error::InvalidValue(format!("RoPE base {base} must exceed 1")));
        }
        Ok(Self { base, axes })
    }

    pub fn head_dim(&self) -> usize {
        self.axes.iter().sum()
    }

    /// Rotation angles for one position, one per pair.
    fn angles(&self, pos: [f32; 3]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.head_dim() / 2);
        for (axis, &n) in self.axes.iter().enumerate() {
            for i in 0..n / 2 {
                let freq = (self.base as f64).powf(-2.0 * i as f64 / n as f64);
                out.push((pos[axis] as f64 * freq) as f32);
            }
        }
        out
    }
}

/// Precomputed cos/sin per (position, pair).
#[derive(Debug, Clone)]
pub struct RopeTable {
    half: usize,
    cos: Vec<f32>,
    sin: Vec<f32>,
}

impl RopeTable {
    pub fn new(cfg: &RopeConfig, positions: &[[f32; 3]]) -> Self {
        let half = cfg.head_dim() / 2;
        let mut cos = Vec::with_capacity(positions.len() * half);
        let mut sin = Vec::with_capacity(positions.len() * half);
        for &p in positions {
            for a in cfg.angles(p) {
                let (s, c) = (a as f64).sin_cos();
                cos.push(c as f32);
                sin.push(s as f32);
            }
        }
        Self { half, cos, sin }
    }

    pub fn from_grid(cfg: &RopeConfig, positions: &[[usize; 3]]) -> Self {
        let p: Vec<[f32; 3]> = positions
            .iter()
            .map(|q| [q[0] as f32, q[1] as f32, q[2] as f32])
            .collect();
        Self::new(cfg, &p)
    }

    pub fn len(&self) -> usize {
        if self.half == 0 {
            0
        } else {
            self.cos.len() / self.half
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head_dim(&self) -> usize {
        self.half * 2
    }

    fn rotate_row(&self, row_idx: usize, row: &mut [f32], inverse: bool) {
        let hd = self.half * 2;
        let cos = &self.cos[row_idx * self.half..(row_idx + 1) * self.half];
        let sin = &self.sin[row_idx * self.half..(row_idx + 1) * self.half];
        for head in row.chunks_exact_mut(hd) {
            for (j, pair) in head.chunks_exact_mut(2).enumerate() {
                let (c, s) = (cos[j], if inverse { -sin[j] } else { sin[j] });
                let (a, b) = (pair[0], pair[1]);
                pair[0] = a * c - b * s;
                pair[1] = a * s + b * c;
            }
        }
    }

    /// Rotates every head of every row in place. Row `i` uses position `i`.
    pub fn apply_in_place(&self, x: &mut Array2<f32>, inverse: bool) -> Result<()> {
        if x.nrows() != self.len() {
            return Err(Error::Shape(format!("{} rows for {} RoPE positions", x.nrows(), self.len())));
        }
        if self.half == 0 || x.ncols() % (self.half * 2) != 0 {
            return Err(Error::Shape(format!(
                "row width {} not a multiple of RoPE head dim {}",
                x.ncols(),
                self.half * 2
            )));
        }
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let slice = row.as_slice_mut().expect("rows of standard-layout arrays are contiguous");
            self.rotate_row(i, slice, inverse);
        }
        Ok(())
    }

    pub fn apply(&self, x: &Array2<f32>) -> Result<Array2<f32>> {
        let mut y = x.as_standard_layout().into_owned();
        self.apply_in_place(&mut y, false)?;
        Ok(y)
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> RopeTable {
        let mut cos = Vec::with_capacity(rows.len() * self.half);
        let mut sin = Vec::with_capacity(rows.len() * self.half);
        for &r in rows {
            cos.extend_from_slice(&self.cos[r * self.half..(r + 1) * self.half]);
            sin.extend_from_slice(&self.sin[r * self.half..(r + 1) * self.half]);
        }
        RopeTable {
            half: self.half,
            cos,
            sin,
        }
    }
}

/// Rotates `vectors` (rows, width a multiple of the head dim) at `positions`.
pub fn apply_rope(vectors: &Array2<f32>, positions: &[[f32; 3]], cfg: &RopeConfig) -> Result<Array2<f32>> {
    RopeTable::new(cfg, positions).apply(vectors)
}
