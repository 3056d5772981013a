//! The instruction grammar `add|create a|an <object> [<relation> <anchor>]`.

use crate::error::{Error, Result};

pub const GRAMMAR: &str = "add|create a|an <object> [<relation> <anchor>]";

/// Relation phrases, longest first so multi-word relations win.
pub const RELATIONS: &[&str] = &[
    "in front of",
    "next to",
    "near",
    "beside",
    "above",
    "below",
    "behind",
    "over",
    "under",
    "around",
    "across",
    "toward",
    "circling",
    "on",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub object: String,
    pub relation: Option<String>,
    pub anchor: Option<String>,
}

fn grammar_error(instruction: &str, why: &str) -> Error {
    Error::Grammar(format!(
        "cannot parse instruction {instruction:?} ({why}); accepted grammar: {GRAMMAR}; relations: {}",
        RELATIONS.join(", ")
    ))
}

pub fn parse_instruction(instruction: &str) -> Result<Instruction> {
    let words: Vec<String> = instruction
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    if words.len() < 3 || !matches!(words[0].as_str(), "add" | "create") {
        return Err(grammar_error(instruction, "expected a leading `add` or `create`"));
    }
    if !matches!(words[1].as_str(), "a" | "an") {
        return Err(grammar_error(instruction, "expected `a` or `an` after the verb"));
    }
    let rest = &words[2..];
    let mut split = None;
    'outer: for i in 1..rest.len() {
        for rel in RELATIONS {
            let rw: Vec<&str> = rel.split(' ').collect();
            if rest.len() >= i + rw.len() && rest[i..i + rw.len()].iter().zip(&rw).all(|(a, b)| a == b) {
                split = Some((i, rw.len(), *rel));
                break 'outer;
            }
        }
    }
    match split {
        None => Ok(Instruction {
            object: rest.join(" "),
            relation: None,
            anchor: None,
        }),
        Some((i, n, rel)) => {
            let mut anchor = &rest[i + n..];
            if anchor.first().is_some_and(|w| w == "the") {
                anchor = &anchor[1..];
            }
            if anchor.is_empty() {
                return Err(grammar_error(instruction, "relation without an anchor"));
            }
            Ok(Instruction {
                object: rest[..i].join(" "),
                relation: Some(rel.to_string()),
                anchor: Some(anchor.join(" ")),
            })
        }
    }
}
