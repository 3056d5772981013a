use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary per-pixel mask over a video grid, layout `[frame][row][col]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelMask {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

/// Binary mask over a latent grid, layout `[lf][lh][lw]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentMask {
    lf: usize,
    lh: usize,
    lw: usize,
    data: Vec<u8>,
}

fn check_binary(data: &[u8]) -> Result<()> {
    match data.iter().find(|&&v| v > 1) {
        Some(v) => Err(Error::NonBinaryMask(format!("mask value {v}"))),
        None => Ok(()),
    }
}

macro_rules! mask_common {
    ($ty:ident, $a:ident, $b:ident, $c:ident) => {
        impl $ty {
            pub fn new($a: usize, $b: usize, $c: usize, data: Vec<u8>) -> Result<Self> {
                if data.len() != $a * $b * $c {
                    return Err(Error::Shape(format!(
                        "mask payload has {} values, expected {}",
                        data.len(),
                        $a * $b * $c
                    )));
                }
                check_binary(&data)?;
                Ok(Self { $a, $b, $c, data })
            }

            pub fn zeros($a: usize, $b: usize, $c: usize) -> Self {
                Self { $a, $b, $c, data: vec![0; $a * $b * $c] }
            }

            pub fn ones($a: usize, $b: usize, $c: usize) -> Self {
                Self { $a, $b, $c, data: vec![1; $a * $b * $c] }
            }

            pub fn from_fn($a: usize, $b: usize, $c: usize, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
                let mut data = Vec::with_capacity($a * $b * $c);
                for i in 0..$a {
                    for j in 0..$b {
                        for k in 0..$c {
                            data.push(f(i, j, k) as u8);
                        }
                    }
                }
                Self { $a, $b, $c, data }
            }

            pub fn dims(&self) -> [usize; 3] {
                [self.$a, self.$b, self.$c]
            }

            pub fn data(&self) -> &[u8] {
                &self.data
            }

            #[inline]
            pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
                self.data[(i * self.$b + j) * self.$c + k] != 0
            }

            #[inline]
            pub fn set(&mut self, i: usize, j: usize, k: usize, on: bool) {
                self.data[(i * self.$b + j) * self.$c + k] = on as u8;
            }

            pub fn count(&self) -> usize {
                self.data.iter().filter(|&&v| v != 0).count()
            }

            pub fn is_empty(&self) -> bool {
                self.count() == 0
            }

            fn check_dims(&self, other: &Self) -> Result<()> {
                if self.dims() != other.dims() {
                    return Err(Error::Shape(format!(
                        "mask dims differ: {:?} vs {:?}",
                        self.dims(),
                        other.dims()
                    )));
                }
                Ok(())
            }

            pub fn union(&self, other: &Self) -> Result<Self> {
                self.check_dims(other)?;
                let data = self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect();
                Ok(Self { $a: self.$a, $b: self.$b, $c: self.$c, data })
            }

            pub fn intersection(&self, other: &Self) -> Result<Self> {
                self.check_dims(other)?;
                let data = self.data.iter().zip(&other.data).map(|(a, b)| a & b).collect();
                Ok(Self { $a: self.$a, $b: self.$b, $c: self.$c, data })
            }

            pub fn complement(&self) -> Self {
                let data = self.data.iter().map(|v| 1 - v).collect();
                Self { $a: self.$a, $b: self.$b, $c: self.$c, data }
            }

            /// Intersection over union; two empty masks count as a perfect match.
            pub fn iou(&self, other: &Self) -> Result<f64> {
                self.check_dims(other)?;
                let (mut inter, mut uni) = (0usize, 0usize);
                for (a, b) in self.data.iter().zip(&other.data) {
                    inter += (a & b) as usize;
                    uni += (a | b) as usize;
                }
                Ok(if uni == 0 { 1.0 } else { inter as f64 / uni as f64 })
            }
        }
    };
}

mask_common!(PixelMask, frames, height, width);
mask_common!(LatentMask, lf, lh, lw);

impl PixelMask {
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }

    /// One frame as a row-major slice.
    pub fn frame(&self, f: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.data[f * n..(f + 1) * n]
    }

    /// Assembles a mask from per-frame slices.
    pub fn from_frames(height: usize, width: usize, frames: &[Vec<u8>]) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * height * width);
        for fr in frames {
            if fr.len() != height * width {
                return Err(Error::Shape("frame mask size mismatch".into()));
            }
            data.extend_from_slice(fr);
        }
        Self::new(frames.len(), height, width, data)
    }

    /// Mask as a single-channel float video (0.0 / 1.0).
    pub fn as_float(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

impl LatentMask {
    pub fn grid(&self) -> [usize; 3] {
        [self.lf, self.lh, self.lw]
    }

    /// Reduces to a token grid of the given patch size; a token is set when any
    /// of its cells is set.
    pub fn pool_any(&self, patch: [usize; 3]) -> Result<LatentMask> {
        let [pt, ph, pw] = patch;
        if pt == 0 || ph == 0 || pw == 0 || self.lf % pt != 0 || self.lh % ph != 0 || self.lw % pw != 0 {
            return Err(Error::Shape(format!("mask grid {:?} not divisible by patch {patch:?}", self.grid())));
        }
        let (tf, th, tw) = (self.lf / pt, self.lh / ph, self.lw / pw);
        Ok(LatentMask::from_fn(tf, th, tw, |t, y, x| {
            (0..pt).any(|a| (0..ph).any(|b| (0..pw).any(|c| self.get(t * pt + a, y * ph + b, x * pw + c))))
        }))
    }
}
