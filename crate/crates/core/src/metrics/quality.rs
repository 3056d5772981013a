//! Four-aspect edit quality scores: offline proxies or a remote VLM.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{segment_heuristic, DEFAULT_TOLERANCE};
use crate::tensor::{PixelMask, VideoClip};
use crate::vlm::{frame_png, keyframe_indices, ChatClient, RemoteConfig};

pub const EVALUATION_PROMPT: &str = include_str!("../../assets/prompts/evaluation.txt");

pub const LABELS: [&str; 4] = ["text_alignment", "visual_quality", "edit_harmonization", "dynamics"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityScores {
    pub text_alignment: f64,
    pub visual_quality: f64,
    pub edit_harmonization: f64,
    pub dynamics: f64,
}

impl QualityScores {
    pub fn as_array(&self) -> [f64; 4] {
        [self.text_alignment, self.visual_quality, self.edit_harmonization, self.dynamics]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in LABELS.iter().zip(self.as_array()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue(format!("{name} score {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub struct QualityRequest<'a> {
    pub original: &'a VideoClip,
    pub edited: &'a VideoClip,
    pub edit_prompt: &'a str,
    /// Phrase naming the inserted object.
    pub edit_object: &'a str,
    /// Where the object is supposed to be, when known.
    pub reference_mask: Option<&'a PixelMask>,
}

pub trait QualityBackend {
    fn evaluate(&self, request: &QualityRequest) -> Result<QualityScores>;
}

/// Deterministic offline proxies computed from a heuristic segmentation of
/// the edit object in the edited video:
///
/// - text alignment: IoU with the reference mask, or the fraction of frames
///   where the object is found when there is no reference;
/// - visual quality: ratio of the smaller to the larger Laplacian energy of
///   the edited and original videos;
/// - edit harmonization: `1 / (1 + g / 0.05)` where `g` is the mean absolute
///   gradient-magnitude change in a two-pixel ring around the object
///   (0 when no object is found);
/// - dynamics: mean over consecutive frames of `1 - |area change| / max area`
///   when the object is present in both, 0 otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubQuality;

fn gray(video: &VideoClip, f: usize) -> Vec<f64> {
    video
        .frame(f)
        .chunks_exact(video.channels())
        .map(|p| p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64)
        .collect()
}

fn laplacian_energy(video: &VideoClip) -> f64 {
    let (h, w) = (video.height(), video.width());
    if h < 3 || w < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for f in 0..video.frames() {
        let g = gray(video, f);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let l = 4.0 * g[y * w + x] - g[y * w + x - 1] - g[y * w + x + 1] - g[(y - 1) * w + x] - g[(y + 1) * w + x];
                total += l * l;
            }
        }
    }
    total / (video.frames() * (h - 2) * (w - 2)) as f64
}

fn gradient_magnitude(g: &[f64], h: usize, w: usize, y: usize, x: usize) -> f64 {
    let at = |yy: usize, xx: usize| g[yy.min(h - 1) * w + xx.min(w - 1)];
    let gx = at(y, x + 1) - at(y, x.saturating_sub(1));
    let gy = at(y + 1, x) - at(y.saturating_sub(1), x);
    (gx * gx + gy * gy).sqrt()
}

impl QualityBackend for StubQuality {
    fn evaluate(&self, req: &QualityRequest) -> Result<QualityScores> {
        if !req.original.same_dims(req.edited) {
            return Err(Error::Shape(format!("{:?} vs {:?}", req.original.dims(), req.edited.dims())));
        }
        let mask = segment_heuristic(req.edited, req.edit_object, DEFAULT_TOLERANCE)?;
        let (nf, h, w) = (req.edited.frames(), req.edited.height(), req.edited.width());
        let areas: Vec<usize> = (0..nf).map(|f| mask.frame(f).iter().filter(|&&v| v == 1).count()).collect();

        let text_alignment = match req.reference_mask {
            Some(r) => mask.iou(r)?,
            None => areas.iter().filter(|&&a| a > 0).count() as f64 / nf as f64,
        };

        let (ea, eb) = (laplacian_energy(req.edited), laplacian_energy(req.original));
        let visual_quality = if ea.max(eb) == 0.0 { 1.0 } else { ea.min(eb) / ea.max(eb) };

        let mut ring_sum = 0.0;
        let mut ring_n = 0usize;
        for f in 0..nf {
            let m = mask.frame(f);
            let (ge, go) = (gray(req.edited, f), gray(req.original, f));
            for y in 0..h {
                for x in 0..w {
                    if m[y * w + x] == 1 {
                        continue;
                    }
                    let near = (y.saturating_sub(2)..=(y + 2).min(h - 1))
                        .any(|yy| (x.saturating_sub(2)..=(x + 2).min(w - 1)).any(|xx| m[yy * w + xx] == 1));
                    if near {
                        ring_sum += (gradient_magnitude(&ge, h, w, y, x) - gradient_magnitude(&go, h, w, y, x)).abs();
                        ring_n += 1;
                    }
                }
            }
        }
        let edit_harmonization = if ring_n == 0 {
            0.0
        } else {
            1.0 / (1.0 + (ring_sum / ring_n as f64) / 0.05)
        };

        let dynamics = if nf < 2 {
            if areas[0] > 0 {
                1.0
            } else {
                0.0
            }
        } else {
            let s: f64 = areas
                .windows(2)
                .map(|p| {
                    if p[0] > 0 && p[1] > 0 {
                        1.0 - (p[0] as f64 - p[1] as f64).abs() / p[0].max(p[1]) as f64
                    } else {
                        0.0
                    }
                })
                .sum();
            s / (nf - 1) as f64
        };

        let scores = QualityScores {
            text_alignment,
            visual_quality,
            edit_harmonization,
            dynamics,
        };
        scores.validate()?;
        Ok(scores)
    }
}

/// Scores from a chat-completion endpoint shown key frames of both videos.
pub struct RemoteQuality {
    client: ChatClient,
}

impl RemoteQuality {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        Ok(Self {
            client: ChatClient::new(config)?,
        })
    }
}

impl QualityBackend for RemoteQuality {
    fn evaluate(&self, req: &QualityRequest) -> Result<QualityScores> {
        let idx = keyframe_indices(req.original.frames());
        let mut images = Vec::new();
        for v in [req.original, req.edited] {
            for &f in &idx {
                images.push(frame_png(v, f)?);
            }
        }
        let system: String = EVALUATION_PROMPT
            .lines()
            .skip_while(|l| l.starts_with('#') || l.trim().is_empty())
            .collect::<Vec<_>>()
            .join("\n");
        let user = format!(
            "Edit prompt: {}\nThe first {n} images are original frames; the next {n} are the same frames after the edit.",
            req.edit_prompt,
            n = idx.len()
        );
        let reply = self.client.chat(&system, &user, &images)?;
        parse_scores(&reply).inspect_err(|_| warn!("malformed evaluation reply: {reply}"))
    }
}

/// Finds each label (underscores or spaces, any case) and reads the first
/// decimal that follows it.
pub fn parse_scores(reply: &str) -> Result<QualityScores> {
    let lower = reply.to_lowercase();
    let mut vals = [0.0f64; 4];
    for (i, label) in LABELS.iter().enumerate() {
        let spaced = label.replace('_', " ");
        let pos = lower
            .find(label)
            .map(|p| p + label.len())
            .or_else(|| lower.find(&spaced).map(|p| p + spaced.len()))
            .ok_or_else(|| Error::Schema {
                reason: format!("missing score `{label}`"),
                raw: reply.to_string(),
            })?;
        let rest = &lower[pos..];
        let start = rest
            .find(|c: char| c.is_ascii_digit() || c == '-' || c == '.')
            .filter(|&s| rest[..s].chars().all(|c| !c.is_alphanumeric()))
            .ok_or_else(|| Error::Schema {
                reason: format!("no number after `{label}`"),
                raw: reply.to_string(),
            })?;
        let num: String = rest[start..]
            .chars()
            .take_while(|c| c.is_ascii_digit() || *c == '.' || *c == '-' || *c == 'e')
            .collect();
        let v: f64 = num.parse().map_err(|_| Error::Schema {
            reason: format!("unparseable score {num:?} for `{label}`"),
            raw: reply.to_string(),
        })?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Schema {
                reason: format!("score {v} for `{label}` outside [0, 1]"),
                raw: reply.to_string(),
            });
        }
        vals[i] = v;
    }
    Ok(QualityScores {
        text_alignment: vals[0],
        visual_quality: vals[1],
        edit_harmonization: vals[2],
        dynamics: vals[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ColorWord;

    fn with_square(present: bool) -> (VideoClip, PixelMask) {
        let (nf, h, w) = (3, 24, 24);
        let inside = |y: usize, x: usize| (8..16).contains(&y) && (6..14).contains(&x);
        let mut data = Vec::new();
        for _ in 0..nf {
            for y in 0..h {
                for x in 0..w {
                    let px = if present && inside(y, x) {
                        ColorWord::Red.rgb()
                    } else {
                        [0.2 + 0.01 * (x % 3) as f32, 0.2, 0.25]
                    };
                    data.extend_from_slice(&px);
                }
            }
        }
        (
            VideoClip::new(nf, h, w, 3, data).unwrap(),
            PixelMask::from_fn(nf, h, w, |_, y, x| inside(y, x)),
        )
    }

    #[test]
    fn perfect_edit_has_full_alignment_and_absent_has_none() {
        let (orig, _) = with_square(false);
        let (edit, truth) = with_square(true);
        let req = |e| QualityRequest {
            original: &orig,
            edited: e,
            edit_prompt: "add a red box",
            edit_object: "red box",
            reference_mask: Some(&truth),
        };
        let s = StubQuality.evaluate(&req(&edit)).unwrap();
        assert_eq!(s.text_alignment, 1.0);
        assert_eq!(s.dynamics, 1.0);
        s.validate().unwrap();
        let a = StubQuality.evaluate(&req(&orig)).unwrap();
        assert_eq!(a.text_alignment, 0.0);
        assert_eq!(a.dynamics, 0.0);
        assert_eq!(a.visual_quality, 1.0);
    }

    #[test]
    fn parses_labeled_scores() {
        let s = parse_scores(r#"{"text_alignment": 0.8, "visual_quality": 0.7, "edit_harmonization": 0.7, "dynamics": 0.7}"#).unwrap();
        assert_eq!(s.as_array(), [0.8, 0.7, 0.7, 0.7]);
        let s = parse_scores("Text alignment: 0.9\nVisual quality = .5\nEdit harmonization: 1\nDynamics: 0").unwrap();
        assert_eq!(s.as_array(), [0.9, 0.5, 1.0, 0.0]);
        assert!(matches!(parse_scores("dynamics: 0.5"), Err(Error::Schema { .. })));
        assert!(matches!(
            parse_scores("text_alignment: 1.5 visual_quality: 1 edit_harmonization: 1 dynamics: 1"),
            Err(Error::Schema { .. })
        ));
    }
}
