//! Fixed word vocabulary for the toy text encoder.

use crate::error::{Error, Result};

/// The 64 words the toy model knows. Index = token id.
pub const VOCABULARY: [&str; 64] = [
    "a", "an", "the", "and", "with", "over", "on", "in", "of", "to",
    "scene", "video", "background", "moving", "static", "left", "right", "up", "down", "near",
    "beside", "above", "below", "behind", "front", "around", "across", "toward", "next", "circling",
    "disk", "ball", "square", "box", "triangle", "red", "green", "blue", "yellow", "magenta",
    "cyan", "white", "orange", "striped", "checkered", "gradient", "noise", "dark", "plain", "camera",
    "pan", "panning", "object", "new", "added", "bouncing", "sliding", "slowly", "quickly", "small",
    "large", "shape", "while", "is",
];

pub fn vocab_size() -> usize {
    VOCABULARY.len()
}

pub fn word_id(word: &str) -> Option<usize> {
    VOCABULARY.iter().position(|w| *w == word)
}

/// Lower-cases, splits on non-letters and maps known words to ids.
/// Words outside the vocabulary are dropped.
pub fn tokenize(text: &str) -> Vec<usize> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .filter_map(|w| word_id(&w.to_ascii_lowercase()))
        .collect()
}

pub fn check_ids(ids: &[usize], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= vocab) {
        Some(&i) => Err(Error::UnknownToken(i)),
        None => Ok(()),
    }
}
