//! Directional similarity between image and text embedding changes.

use log::warn;

use super::embed::Embedder;
use crate::error::{Error, Result};
use crate::tensor::VideoClip;

fn sub(a: &[f32], b: &[f32]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| *x as f64 - *y as f64).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Mean over frames of the cosine between the image-embedding change
/// (edited minus source frame) and the text-embedding change (edit minus
/// source prompt). A zero-length change scores 0 and logs a warning.
pub fn directional_score(
    src: &VideoClip,
    edited: &VideoClip,
    src_prompt: &str,
    edit_prompt: &str,
    embedder: &dyn Embedder,
) -> Result<f64> {
    Ok(directional_frames(src, edited, src_prompt, edit_prompt, embedder)?
        .iter()
        .sum::<f64>()
        / src.frames() as f64)
}

/// Per-frame directional scores.
pub fn directional_frames(
    src: &VideoClip,
    edited: &VideoClip,
    src_prompt: &str,
    edit_prompt: &str,
    embedder: &dyn Embedder,
) -> Result<Vec<f64>> {
    if !src.same_dims(edited) {
        return Err(Error::Shape(format!("{:?} vs {:?}", src.dims(), edited.dims())));
    }
    let dt = sub(&embedder.embed_text(edit_prompt), &embedder.embed_text(src_prompt));
    let mut out = Vec::with_capacity(src.frames());
    let mut warned = false;
    for f in 0..src.frames() {
        let di = sub(&embedder.embed_image(edited.frame(f)), &embedder.embed_image(src.frame(f)));
        match cosine(&di, &dt) {
            Some(c) => out.push(c),
            None => {
                if !warned {
                    warn!("zero-length embedding change in directional score; scoring 0");
                    warned = true;
                }
                out.push(0.0);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ColorWord;
    use crate::metrics::embed::HistogramEmbedder;

    fn scene(with_red: bool) -> VideoClip {
        let (h, w) = (16, 16);
        let mut data = Vec::new();
        for _ in 0..2 {
            for y in 0..h {
                for x in 0..w {
                    let px = if with_red && (4..10).contains(&y) && (4..10).contains(&x) {
                        ColorWord::Red.rgb()
                    } else if (x + y) % 2 == 0 {
                        [0.2, 0.22, 0.25]
                    } else {
                        ColorWord::Blue.rgb()
                    };
                    data.extend_from_slice(&px);
                }
            }
        }
        VideoClip::new(2, h, w, 3, data).unwrap()
    }

    #[test]
    fn identical_frames_score_zero() {
        let v = scene(false);
        let s = directional_score(&v, &v, "a blue square", "a blue square and a red ball", &HistogramEmbedder).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn adding_red_aligns_with_red_prompt() {
        let e = HistogramEmbedder;
        let s = directional_score(&scene(false), &scene(true), "a blue square", "a blue square and a red ball", &e).unwrap();
        assert!(s > 0.0, "{s}");
        let anti = directional_score(&scene(true), &scene(false), "a blue square", "a blue square and a red ball", &e).unwrap();
        assert!(anti < 0.0, "{anti}");
    }

    struct Scaled(f32);
    impl Embedder for Scaled {
        fn dim(&self) -> usize {
            HistogramEmbedder.dim()
        }
        fn embed_image(&self, f: &[f32]) -> Vec<f32> {
            HistogramEmbedder.embed_image(f).iter().map(|v| v * self.0).collect()
        }
        fn embed_text(&self, t: &str) -> Vec<f32> {
            HistogramEmbedder.embed_text(t).iter().map(|v| v * self.0).collect()
        }
    }

    #[test]
    fn invariant_to_positive_rescaling() {
        let a = directional_score(&scene(false), &scene(true), "blue", "blue red", &Scaled(1.0)).unwrap();
        let b = directional_score(&scene(false), &scene(true), "blue", "blue red", &Scaled(3.5)).unwrap();
        assert!((a - b).abs() < 1e-6);
    }
}
