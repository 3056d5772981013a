//! Latent <-> token conversion.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tensor::LatentClip;

/// Video tokens: one row per `(p_t, p_h, p_w)` patch in `(t, h, w)` scan order.
/// A row lists the patch cells in `(t, h, w)` order, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    pub tokens: Array2<f32>,
    pub positions: Vec<[usize; 3]>,
    pub token_grid: [usize; 3],
    pub patch: [usize; 3],
    pub channels: usize,
}

pub fn token_positions(grid: [usize; 3]) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(grid.iter().product());
    for t in 0..grid[0] {
        for y in 0..grid[1] {
            for x in 0..grid[2] {
                out.push([t, y, x]);
            }
        }
    }
    out
}

pub fn token_grid(latent_grid: [usize; 3], patch: [usize; 3]) -> Result<[usize; 3]> {
    let mut g = [0; 3];
    for i in 0..3 {
        if patch[i] == 0 || latent_grid[i] % patch[i] != 0 {
            return Err(Error::Shape(format!(
                "latent grid {latent_grid:?} not divisible by patch {patch:?}"
            )));
        }
        g[i] = latent_grid[i] / patch[i];
    }
    Ok(g)
}

pub fn patchify(latent: &LatentClip, patch: [usize; 3]) -> Result<Patches> {
    let [lf, lh, lw, ch] = latent.dims();
    let grid = token_grid([lf, lh, lw], patch)?;
    let [pt, ph, pw] = patch;
    let pdim = pt * ph * pw * ch;
    let n: usize = grid.iter().product();
    let src = latent.data();
    let mut data = Vec::with_capacity(n * pdim);
    for t in 0..grid[0] {
        for y in 0..grid[1] {
            for x in 0..grid[2] {
                for a in 0..pt {
                    for b in 0..ph {
                        for c in 0..pw {
                            let i = latent.index(t * pt + a, y * ph + b, x * pw + c, 0);
                            data.extend_from_slice(&src[i..i + ch]);
                        }
                    }
                }
            }
        }
    }
    Ok(Patches {
        tokens: Array2::from_shape_vec((n, pdim), data).expect("sized above"),
        positions: token_positions(grid),
        token_grid: grid,
        patch,
        channels: ch,
    })
}

/// Inverse of [`patchify`] for a token matrix laid out like `template`.
pub fn unpatchify(tokens: &Array2<f32>, token_grid: [usize; 3], patch: [usize; 3], channels: usize) -> Result<LatentClip> {
    let [pt, ph, pw] = patch;
    let n: usize = token_grid.iter().product();
    let pdim = pt * ph * pw * channels;
    if tokens.dim() != (n, pdim) {
        return Err(Error::Shape(format!("token matrix {:?}, expected ({n}, {pdim})", tokens.dim())));
    }
    let (lf, lh, lw) = (token_grid[0] * pt, token_grid[1] * ph, token_grid[2] * pw);
    let mut out = LatentClip::zeros(lf, lh, lw, channels);
    let mut row = 0;
    for t in 0..token_grid[0] {
        for y in 0..token_grid[1] {
            for x in 0..token_grid[2] {
                let tok = tokens.row(row);
                let mut k = 0;
                for a in 0..pt {
                    for b in 0..ph {
                        for c in 0..pw {
                            let i = out.index(t * pt + a, y * ph + b, x * pw + c, 0);
                            for ch in 0..channels {
                                out.data_mut()[i + ch] = tok[k];
                                k += 1;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    Ok(out)
}

impl Patches {
    pub fn to_latent(&self) -> Result<LatentClip> {
        unpatchify(&self.tokens, self.token_grid, self.patch, self.channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(lf: usize, lh: usize, lw: usize, ch: usize) -> LatentClip {
        let n = lf * lh * lw * ch;
        LatentClip::new(lf, lh, lw, ch, (0..n).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn unit_patch_gives_one_token_per_cell() {
        let l = ramp(2, 3, 4, 3);
        let p = patchify(&l, [1, 1, 1]).unwrap();
        assert_eq!(p.tokens.dim(), (24, 3));
        assert_eq!(p.tokens.row(5).to_vec(), vec![15.0, 16.0, 17.0]);
    }

    #[test]
    fn scan_order_matches_index_oracle() {
        let l = ramp(2, 4, 4, 1);
        let p = patchify(&l, [1, 2, 2]).unwrap();
        assert_eq!(p.tokens.nrows(), 8);
        // Oracle: token (t, y, x) holds cells (t, 2y+b, 2x+c) for b, c in {0, 1}.
        for (i, pos) in p.positions.iter().enumerate() {
            let [t, y, x] = *pos;
            assert_eq!(i, (t * 2 + y) * 2 + x);
            let expect: Vec<f32> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .map(|&(b, c)| (t * 16 + (2 * y + b) * 4 + 2 * x + c) as f32)
                .collect();
            assert_eq!(p.tokens.row(i).to_vec(), expect);
        }
    }

    #[test]
    fn round_trip_and_divisibility() {
        let l = ramp(4, 8, 8, 3);
        let p = patchify(&l, [2, 2, 4]).unwrap();
        assert_eq!(p.to_latent().unwrap(), l);
        assert!(patchify(&l, [3, 1, 1]).is_err());
    }
}
