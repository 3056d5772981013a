//! Named object colors shared by the corpus, the segmenters and the toy
//! embedders.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorWord {
    Red,
    Green,
    Blue,
    Yellow,
    Magenta,
    Cyan,
    White,
    Orange,
}

impl ColorWord {
    pub const ALL: [ColorWord; 8] = [
        ColorWord::Red,
        ColorWord::Green,
        ColorWord::Blue,
        ColorWord::Yellow,
        ColorWord::Magenta,
        ColorWord::Cyan,
        ColorWord::White,
        ColorWord::Orange,
    ];

    pub fn word(self) -> &'static str {
        match self {
            ColorWord::Red => "red",
            ColorWord::Green => "green",
            ColorWord::Blue => "blue",
            ColorWord::Yellow => "yellow",
            ColorWord::Magenta => "magenta",
            ColorWord::Cyan => "cyan",
            ColorWord::White => "white",
            ColorWord::Orange => "orange",
        }
    }

    pub fn rgb(self) -> [f32; 3] {
        match self {
            ColorWord::Red => [0.92, 0.12, 0.10],
            ColorWord::Green => [0.15, 0.85, 0.20],
            ColorWord::Blue => [0.15, 0.30, 0.95],
            ColorWord::Yellow => [0.95, 0.90, 0.15],
            ColorWord::Magenta => [0.90, 0.15, 0.85],
            ColorWord::Cyan => [0.10, 0.88, 0.92],
            ColorWord::White => [0.96, 0.96, 0.96],
            ColorWord::Orange => [0.98, 0.55, 0.08],
        }
    }

    pub fn from_word(w: &str) -> Option<ColorWord> {
        Self::ALL.into_iter().find(|c| c.word().eq_ignore_ascii_case(w))
    }

    /// First palette color named in `phrase`.
    pub fn find_in(phrase: &str) -> Option<ColorWord> {
        phrase.split_whitespace().find_map(|w| {
            let w: String = w.chars().filter(|c| c.is_ascii_alphabetic()).collect();
            Self::from_word(&w)
        })
    }
}

/// Root-mean-square per-channel distance between two RGB triples.
pub fn rgb_distance(a: &[f32], b: &[f32; 3]) -> f32 {
    let s: f32 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / 3.0).sqrt()
}
