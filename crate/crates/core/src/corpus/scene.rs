//! Scene specifications and the anti-aliased shape rasterizer.

use serde::{Deserialize, Serialize};

use super::palette::ColorWord;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{PixelMask, VideoClip};
use rand::Rng;

/// Supersampling grid per pixel axis.
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk,
    Square,
    Triangle,
}

impl Shape {
    pub fn word(self) -> &'static str {
        match self {
            Shape::Disk => "disk",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }

    /// Whether the point lies inside the shape centred at the origin with
    /// half-extent `r`.
    fn contains(self, dx: f32, dy: f32, r: f32) -> bool {
        match self {
            Shape::Disk => dx * dx + dy * dy <= r * r,
            Shape::Square => dx.abs() <= r && dy.abs() <= r,
            Shape::Triangle => {
                // Apex up, base along y = r.
                dy <= r && dy >= -r && dx.abs() <= (dy + r) * 0.5
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Motion {
    /// Centre at `start + f * velocity`.
    Linear { start: [f32; 2], velocity: [f32; 2] },
    /// Centre on a circle, `phase + f * angular` radians.
    Circular {
        center: [f32; 2],
        radius: f32,
        angular: f32,
        phase: f32,
    },
}

impl Motion {
    /// Object centre `(x, y)` in pixels at frame `f`.
    pub fn position(&self, f: usize) -> [f32; 2] {
        let f = f as f32;
        match *self {
            Motion::Linear { start, velocity } => [start[0] + f * velocity[0], start[1] + f * velocity[1]],
            Motion::Circular {
                center,
                radius,
                angular,
                phase,
            } => {
                let a = phase + f * angular;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
        }
    }

    /// Motion summary in corpus vocabulary.
    pub fn describe(&self) -> &'static str {
        match *self {
            Motion::Circular { .. } => "circling",
            Motion::Linear { velocity, .. } => {
                let [vx, vy] = velocity;
                if vx.abs() < 1e-6 && vy.abs() < 1e-6 {
                    "static"
                } else if vx.abs() >= vy.abs() {
                    if vx > 0.0 {
                        "moving right"
                    } else {
                        "moving left"
                    }
                } else if vy > 0.0 {
                    "moving down"
                } else {
                    "moving up"
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub color: ColorWord,
    /// Half-extent in pixels.
    pub size: f32,
    pub motion: Motion,
}

impl ObjectSpec {
    pub fn label(&self) -> String {
        format!("{} {}", self.color.word(), self.shape.word())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Plain,
    Gradient,
    Striped,
    Checkered,
    Noise,
}

impl Background {
    pub fn word(self) -> &'static str {
        match self {
            Background::Plain => "plain",
            Background::Gradient => "gradient",
            Background::Striped => "striped",
            Background::Checkered => "checkered",
            Background::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub background: Background,
    /// Back-to-front drawing order.
    pub objects: Vec<ObjectSpec>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Background shift in pixels per frame.
    pub pan: [f32; 2],
}

/// Ground-truth track of one object: visible-pixel mask per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub label: String,
    pub color: ColorWord,
    pub mask: PixelMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub video: VideoClip,
    pub tracks: Vec<ObjectTrack>,
}

impl GeneratedScene {
    pub fn labels(&self) -> Vec<String> {
        self.tracks.iter().map(|t| t.label.clone()).collect()
    }
}

impl SceneSpec {
    pub fn labels(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.label()).collect()
    }

    /// Short caption built from corpus vocabulary.
    pub fn caption(&self) -> String {
        let mut parts: Vec<String> = self
            .objects
            .iter()
            .map(|o| format!("a {} {}", o.label(), o.motion.describe()))
            .collect();
        let objs = match parts.len() {
            0 => String::from("a scene"),
            1 => parts.remove(0),
            _ => {
                let last = parts.pop().unwrap_or_default();
                format!("{} and {}", parts.join(" and "), last)
            }
        };
        let mut s = format!("{objs} over a {} background", self.background.word());
        if self.pan != [0.0, 0.0] {
            s.push_str(" camera panning");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidValue("scene dimensions must be positive".into()));
        }
        let labels = self.labels();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidValue(format!("duplicate label `{l}` in scene")));
            }
        }
        for o in &self.objects {
            if !(o.size > 0.0) {
                return Err(Error::InvalidValue(format!("object `{}` has non-positive size", o.label())));
            }
            for f in 0..self.frames {
                let [x, y] = o.motion.position(f);
                let r = o.size;
                if x - r < 0.0 || y - r < 0.0 || x + r > self.width as f32 || y + r > self.height as f32 {
                    return Err(Error::InvalidValue(format!(
                        "object `{}` leaves the frame at frame {f}",
                        o.label()
                    )));
                }
            }
        }
        Ok(())
    }
}

struct Texture {
    base: [f32; 3],
    alt: [f32; 3],
    lattice: Vec<f32>,
    lattice_n: usize,
}

impl Texture {
    fn new(spec: &SceneSpec) -> Self {
        let mut r = rng::stream(spec.seed, &[rng::TAG_SCENE]);
        let mut tone = |lo: f32, hi: f32| -> [f32; 3] {
            let g = lo + (hi - lo) * r.random::<f32>();
            let tint = [r.random::<f32>(), r.random::<f32>(), r.random::<f32>()];
            [0, 1, 2].map(|c| (g + 0.06 * (tint[c] - 0.5)).clamp(0.0, 1.0))
        };
        let base = tone(0.14, 0.22);
        let alt = tone(0.30, 0.40);
        let lattice_n = 32;
        let lattice = (0..lattice_n * lattice_n).map(|_| r.random::<f32>()).collect();
        Self {
            base,
            alt,
            lattice,
            lattice_n,
        }
    }

    fn noise(&self, x: f32, y: f32) -> f32 {
        let cell = 8.0;
        let (gx, gy) = (x / cell, y / cell);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let n = self.lattice_n as i64;
        let at = |i: f32, j: f32| {
            let (i, j) = ((i as i64).rem_euclid(n) as usize, (j as i64).rem_euclid(n) as usize);
            self.lattice[j * self.lattice_n + i]
        };
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
        let bot = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
        top * (1.0 - fy) + bot * fy
    }

    fn sample(&self, kind: Background, x: f32, y: f32, w: f32) -> [f32; 3] {
        let mix = match kind {
            Background::Plain => 0.0,
            Background::Gradient => (x / w).clamp(0.0, 1.0),
            Background::Striped => 0.5 + 0.5 * ((x + y) * std::f32::consts::PI / 6.0).sin(),
            Background::Checkered => {
                let c = ((x / 8.0).floor() as i64 + (y / 8.0).floor() as i64).rem_euclid(2);
                c as f32
            }
            Background::Noise => self.noise(x, y),
        };
        [0, 1, 2].map(|c| self.base[c] * (1.0 - mix) + self.alt[c] * mix)
    }
}

/// Render a scene. Pixels blend object colors by supersampled coverage;
/// an object's mask holds the pixels where its visible coverage is at least
/// one half.
pub fn generate(spec: &SceneSpec) -> Result<GeneratedScene> {
    spec.validate()?;
    let (nf, h, w) = (spec.frames, spec.height, spec.width);
    let tex = Texture::new(spec);
    let mut data = vec![0f32; nf * h * w * 3];
    let mut masks: Vec<Vec<u8>> = vec![vec![0; nf * h * w]; spec.objects.len()];
    let ss = SUPERSAMPLE as f32;
    let mut coverage = vec![0f32; spec.objects.len()];
    for f in 0..nf {
        let centers: Vec<[f32; 2]> = spec.objects.iter().map(|o| o.motion.position(f)).collect();
        let shift = [spec.pan[0] * f as f32, spec.pan[1] * f as f32];
        for y in 0..h {
            for x in 0..w {
                let mut rgb = tex.sample(spec.background, x as f32 + 0.5 + shift[0], y as f32 + 0.5 + shift[1], w as f32);
                for (oi, o) in spec.objects.iter().enumerate() {
                    let [cx, cy] = centers[oi];
                    let mut hits = 0usize;
                    for sy in 0..SUPERSAMPLE {
                        for sx in 0..SUPERSAMPLE {
                            let px = x as f32 + (sx as f32 + 0.5) / ss;
                            let py = y as f32 + (sy as f32 + 0.5) / ss;
                            if o.shape.contains(px - cx, py - cy, o.size) {
                                hits += 1;
                            }
                        }
                    }
                    let c = hits as f32 / (ss * ss);
                    coverage[oi] = c;
                    if c > 0.0 {
                        let col = o.color.rgb();
                        for ch in 0..3 {
                            rgb[ch] = rgb[ch] * (1.0 - c) + col[ch] * c;
                        }
                    }
                }
                // Visible coverage: own coverage attenuated by everything drawn above.
                let mut above = 1.0f32;
                for oi in (0..spec.objects.len()).rev() {
                    let visible = coverage[oi] * above;
                    if visible >= 0.5 {
                        masks[oi][(f * h + y) * w + x] = 1;
                    }
                    above *= 1.0 - coverage[oi];
                }
                let base = ((f * h + y) * w + x) * 3;
                data[base..base + 3].copy_from_slice(&rgb);
            }
        }
    }
    let video = VideoClip::new(nf, h, w, 3, data)?;
    let tracks = spec
        .objects
        .iter()
        .zip(masks)
        .map(|(o, m)| {
            Ok(ObjectTrack {
                label: o.label(),
                color: o.color,
                mask: PixelMask::new(nf, h, w, m)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratedScene { video, tracks })
}

/// A random valid scene for training-set augmentation.
pub fn random_scene(seed: u64, frames: usize, height: usize, width: usize) -> SceneSpec {
    let mut r = rng::stream(seed, &[rng::TAG_SCENE, 1]);
    let backgrounds = [
        Background::Plain,
        Background::Gradient,
        Background::Striped,
        Background::Checkered,
        Background::Noise,
    ];
    let shapes = [Shape::Disk, Shape::Square, Shape::Triangle];
    let background = backgrounds[rng::below(&mut r, backgrounds.len())];
    let count = 1 + rng::below(&mut r, 2);
    let mut colors = ColorWord::ALL.to_vec();
    let mut objects = Vec::new();
    for _ in 0..count {
        let color = colors.remove(rng::below(&mut r, colors.len()));
        // Keep the two close palette entries apart.
        colors.retain(|&c| !matches!((color, c), (ColorWord::Yellow, ColorWord::Orange) | (ColorWord::Orange, ColorWord::Yellow)));
        let shape = shapes[rng::below(&mut r, shapes.len())];
        let size = 6.0 + 4.0 * r.random::<f32>();
        let margin = size + 1.0;
        let span = |r: &mut rand_chacha::ChaCha8Rng, n: usize| margin + (n as f32 - 2.0 * margin) * r.random::<f32>();
        let mut motion;
        loop {
            let start = [span(&mut r, width), span(&mut r, height)];
            let velocity = [
                (r.random::<f32>() - 0.5) * 4.0,
                (r.random::<f32>() - 0.5) * 4.0,
            ];
            motion = Motion::Linear { start, velocity };
            let end = motion.position(frames.saturating_sub(1));
            let ok = |v: f32, n: usize| v >= margin && v <= n as f32 - margin;
            if ok(end[0], width) && ok(end[1], height) {
                break;
            }
        }
        objects.push(ObjectSpec {
            shape,
            color,
            size,
            motion,
        });
    }
    let pan = if r.random::<f32>() < 0.3 { [1.0, 0.0] } else { [0.0, 0.0] };
    SceneSpec {
        seed,
        background,
        objects,
        frames,
        height,
        width,
        pan,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(velocity: [f32; 2]) -> SceneSpec {
        SceneSpec {
            seed: 1,
            background: Background::Noise,
            objects: vec![ObjectSpec {
                shape: Shape::Disk,
                color: ColorWord::Red,
                size: 6.0,
                motion: Motion::Linear {
                    start: [20.3, 30.7],
                    velocity,
                },
            }],
            frames: 8,
            height: 64,
            width: 64,
            pan: [0.0, 0.0],
        }
    }

    fn centroid(mask: &PixelMask, f: usize) -> [f64; 2] {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(f, y, x) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1.0;
                }
            }
        }
        [sx / n, sy / n]
    }

    #[test]
    fn static_disk_gives_identical_frames() {
        let g = generate(&disk([0.0, 0.0])).unwrap();
        for f in 1..8 {
            assert_eq!(g.video.frame(f), g.video.frame(0));
            assert_eq!(g.tracks[0].mask.frame(f), g.tracks[0].mask.frame(0));
        }
    }

    #[test]
    fn moving_disk_centroid_advances_one_pixel_per_frame() {
        let g = generate(&disk([1.0, 0.0])).unwrap();
        let m = &g.tracks[0].mask;
        for f in 1..8 {
            let (a, b) = (centroid(m, f - 1), centroid(m, f));
            assert!((b[0] - a[0] - 1.0).abs() <= 0.1, "frame {f}: {a:?} -> {b:?}");
            assert!((b[1] - a[1]).abs() <= 0.1);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = random_scene(9, 8, 64, 64);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
    }

    #[test]
    fn mask_area_matches_disk_area() {
        let g = generate(&disk([0.0, 0.0])).unwrap();
        let area = g.tracks[0].mask.frame(0).iter().filter(|&&v| v == 1).count() as f64;
        let analytic = std::f64::consts::PI * 36.0;
        assert!((area - analytic).abs() / analytic < 0.05, "{area} vs {analytic}");
    }

    #[test]
    fn rejects_objects_leaving_frame_and_duplicate_labels() {
        let mut s = disk([10.0, 0.0]);
        assert!(s.validate().is_err());
        s = disk([0.0, 0.0]);
        s.objects.push(s.objects[0].clone());
        assert!(s.validate().is_err());
    }

    #[test]
    fn random_scenes_are_valid() {
        for seed in 0..50 {
            let s = random_scene(seed, 8, 64, 64);
            s.validate().unwrap();
        }
    }

    #[test]
    fn caption_uses_vocabulary_words() {
        let s = disk([1.0, 0.0]);
        assert_eq!(s.caption(), "a red disk moving right over a noise background");
        let ids = crate::dit::text::tokenize(&s.caption());
        assert_eq!(ids.len(), s.caption().split_whitespace().count());
    }
}
