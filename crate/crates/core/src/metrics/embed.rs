//! Toy image/text embedders sharing one color-histogram space.

use crate::corpus::ColorWord;

pub const BINS: usize = 32;
pub const DIM: usize = 3 * BINS;

/// Maps frames and prompts into a common embedding space.
pub trait Embedder {
    fn dim(&self) -> usize;
    /// Embedding of one interleaved-RGB frame.
    fn embed_image(&self, frame: &[f32]) -> Vec<f32>;
    fn embed_text(&self, text: &str) -> Vec<f32>;
}

fn unit(mut v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn bin(v: f32) -> usize {
    ((v.clamp(0.0, 1.0) * BINS as f32) as usize).min(BINS - 1)
}

/// Text bump width in bins.
const TEXT_SIGMA_BINS: f32 = 2.0;

/// 32-bin per-channel color histogram for images. A text embedding sums,
/// for each palette color word, a Gaussian bump per channel centred on the
/// bin of that color's value.
#[derive(Debug, Clone, Copy, Default)]
pub struct HistogramEmbedder;

impl Embedder for HistogramEmbedder {
    fn dim(&self) -> usize {
        DIM
    }

    fn embed_image(&self, frame: &[f32]) -> Vec<f32> {
        let mut h = vec![0f32; DIM];
        for px in frame.chunks_exact(3) {
            for c in 0..3 {
                h[c * BINS + bin(px[c])] += 1.0;
            }
        }
        unit(h)
    }

    fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut h = vec![0f32; DIM];
        for w in text.split_whitespace() {
            let w: String = w.chars().filter(|c| c.is_ascii_alphabetic()).collect();
            if let Some(col) = ColorWord::from_word(&w) {
                let rgb = col.rgb();
                for c in 0..3 {
                    let centre = bin(rgb[c]) as f32;
                    for b in 0..BINS {
                        let d = (b as f32 - centre) / TEXT_SIGMA_BINS;
                        if d.abs() <= 3.0 {
                            h[c * BINS + b] += (-0.5 * d * d).exp();
                        }
                    }
                }
            }
        }
        unit(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_are_unit_or_zero() {
        let e = HistogramEmbedder;
        let img = e.embed_image(&[0.1, 0.5, 0.9, 0.2, 0.2, 0.2]);
        assert!((img.iter().map(|x| x * x).sum::<f32>() - 1.0).abs() < 1e-6);
        let t = e.embed_text("a red ball");
        assert!((t.iter().map(|x| x * x).sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(e.embed_text("a ball").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn red_text_peaks_at_red_pixel_bins() {
        let e = HistogramEmbedder;
        let t = e.embed_text("red");
        let dot = |c: [f32; 3]| t.iter().zip(&e.embed_image(&c)).map(|(a, b)| a * b).sum::<f32>();
        let exact = dot(ColorWord::Red.rgb());
        assert!(exact > dot([0.85, 0.2, 0.15]));
        assert!(dot([0.85, 0.2, 0.15]) > 0.5 * exact);
        assert!(dot(ColorWord::Blue.rgb()) < 0.2 * exact);
    }
}
