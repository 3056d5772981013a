//! Text-conditioned mask extraction: an oracle over ground-truth corpus
//! tracks and a palette-color heuristic for generated content.

use crate::corpus::{rgb_distance, ColorWord, ObjectTrack};
use crate::error::{Error, Result};
use crate::tensor::{PixelMask, VideoClip};

/// Default RGB tolerance of the heuristic segmenter (root-mean-square per
/// channel).
pub const DEFAULT_TOLERANCE: f32 = 0.15;

/// Maps a phrase to a per-frame mask of the video.
pub trait Segmenter {
    fn segment(&self, video: &VideoClip, phrase: &str) -> Result<PixelMask>;
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn contains_seq(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Index of the track whose label best matches `phrase`.
///
/// A label matches when its words appear contiguously in the phrase, or the
/// phrase's words appear contiguously in the label; the match length is the
/// word count of the contained sequence. The longest match wins and equal
/// best matches are reported as ambiguous.
pub fn match_label(labels: &[String], phrase: &str) -> Result<Option<usize>> {
    let p = words(phrase);
    let mut best: Vec<(usize, usize)> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let l = words(label);
        let len = if contains_seq(&p, &l) {
            l.len()
        } else if contains_seq(&l, &p) {
            p.len()
        } else {
            continue;
        };
        match best.first() {
            Some(&(_, b)) if len < b => {}
            Some(&(_, b)) if len == b => best.push((i, len)),
            _ => best = vec![(i, len)],
        }
    }
    match best.len() {
        0 => Ok(None),
        1 => Ok(Some(best[0].0)),
        _ => Err(Error::Ambiguous {
            phrase: phrase.to_string(),
            candidates: best.iter().map(|&(i, _)| labels[i].clone()).collect(),
        }),
    }
}

/// Stored track mask whose label matches `phrase`; all-zero if none does.
pub fn segment_oracle(video: &VideoClip, phrase: &str, tracks: &[ObjectTrack]) -> Result<PixelMask> {
    let labels: Vec<String> = tracks.iter().map(|t| t.label.clone()).collect();
    let (f, h, w) = (video.frames(), video.height(), video.width());
    match match_label(&labels, phrase)? {
        Some(i) => {
            let m = &tracks[i].mask;
            if m.dims() != [f, h, w] {
                return Err(Error::Shape(format!("track mask {:?} vs video {:?}", m.dims(), [f, h, w])));
            }
            Ok(m.clone())
        }
        None => Ok(PixelMask::zeros(f, h, w)),
    }
}

/// Largest 8-connected component of a binary frame.
fn largest_component(mask: &[u8], h: usize, w: usize) -> Vec<u8> {
    let mut label = vec![0u32; h * w];
    let mut best = (0u32, 0usize);
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if mask[start] == 0 || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let (y, x) = ((i / w) as isize, (i % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] == 1 && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        if size > best.1 {
            best = (next, size);
        }
    }
    label.iter().map(|&l| (l != 0 && l == best.0) as u8).collect()
}

fn morph(mask: &[u8], h: usize, w: usize, dilate: bool) -> Vec<u8> {
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut any = false;
            let mut all = true;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let v = mask[ny * w + nx] == 1;
                    any |= v;
                    all &= v;
                }
            }
            out[y * w + x] = if dilate { any } else { all } as u8;
        }
    }
    out
}

/// Morphological closing with a 3x3 square; out-of-frame neighbours are ignored.
pub fn close3x3(mask: &[u8], h: usize, w: usize) -> Vec<u8> {
    morph(&morph(mask, h, w, true), h, w, false)
}

/// Per frame: pixels within `tolerance` of the phrase's palette color, the
/// largest connected component, then a 3x3 closing.
pub fn segment_heuristic(video: &VideoClip, phrase: &str, tolerance: f32) -> Result<PixelMask> {
    let color = ColorWord::find_in(phrase).ok_or_else(|| Error::NoPalette(phrase.to_string()))?;
    let target = color.rgb();
    let (nf, h, w) = (video.frames(), video.height(), video.width());
    let mut frames = Vec::with_capacity(nf);
    for f in 0..nf {
        let hits: Vec<u8> = (0..h * w)
            .map(|i| (rgb_distance(video.pixel(f, i / w, i % w), &target) <= tolerance) as u8)
            .collect();
        frames.push(close3x3(&largest_component(&hits, h, w), h, w));
    }
    PixelMask::from_frames(h, w, &frames)
}

/// Heuristic segmenter with a fixed tolerance.
#[derive(Debug, Clone, Copy)]
pub struct HeuristicSegmenter {
    pub tolerance: f32,
}

impl Default for HeuristicSegmenter {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl Segmenter for HeuristicSegmenter {
    fn segment(&self, video: &VideoClip, phrase: &str) -> Result<PixelMask> {
        segment_heuristic(video, phrase, self.tolerance)
    }
}

/// Oracle segmenter over the ground-truth tracks of one scene.
#[derive(Debug, Clone)]
pub struct OracleSegmenter {
    pub tracks: Vec<ObjectTrack>,
}

impl Segmenter for OracleSegmenter {
    fn segment(&self, video: &VideoClip, phrase: &str) -> Result<PixelMask> {
        segment_oracle(video, phrase, &self.tracks)
    }
}
