//! Ablation modes, each toggling one mechanism of the full edit.

use serde::{Deserialize, Serialize};

use super::{edit, edit_sdedit, EditConfig, EditContext, EditResult};
use crate::attention::{AnchorSelection, AttentionMode};
use crate::error::{Error, Result};
use crate::planner::{NaivePlanner, Planner};
use crate::tensor::VideoClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Full,
    NoAnchor,
    NoIterative,
    NoVlmProtocol,
    SdeditLow,
    SdeditHigh,
    FullExtended,
    MaskedExtended,
}

impl AblationMode {
    pub const ALL: [AblationMode; 8] = [
        AblationMode::Full,
        AblationMode::NoAnchor,
        AblationMode::NoIterative,
        AblationMode::NoVlmProtocol,
        AblationMode::SdeditLow,
        AblationMode::SdeditHigh,
        AblationMode::FullExtended,
        AblationMode::MaskedExtended,
    ];

    pub fn key(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoAnchor => "no_anchor",
            AblationMode::NoIterative => "no_iterative",
            AblationMode::NoVlmProtocol => "no_vlm_protocol",
            AblationMode::SdeditLow => "sdedit_low",
            AblationMode::SdeditHigh => "sdedit_high",
            AblationMode::FullExtended => "full_extended",
            AblationMode::MaskedExtended => "masked_extended",
        }
    }

    /// Row label for result tables.
    pub fn label(self) -> &'static str {
        match self {
            AblationMode::Full => "Full method",
            AblationMode::NoAnchor => "w/o AnchorExtAttn",
            AblationMode::NoIterative => "w/o Iterative Refinement",
            AblationMode::NoVlmProtocol => "w/o VLM Protocol",
            AblationMode::SdeditLow => "SDEdit (0.6)",
            AblationMode::SdeditHigh => "SDEdit (0.9)",
            AblationMode::FullExtended => "Full extended attention",
            AblationMode::MaskedExtended => "Masked extended attention",
        }
    }

    /// SDEdit strength for the baseline modes.
    pub fn sdedit_strength(self) -> Option<f64> {
        match self {
            AblationMode::SdeditLow => Some(0.6),
            AblationMode::SdeditHigh => Some(0.9),
            _ => None,
        }
    }

    /// Edit configuration for this mode derived from the full-method one.
    pub fn configure(self, base: &EditConfig) -> EditConfig {
        let mut c = base.clone();
        match self {
            AblationMode::NoAnchor => c.attention = AttentionMode::Standard,
            AblationMode::NoIterative => c.ladder.truncate(1),
            AblationMode::FullExtended => c.attention = AttentionMode::FullExtended,
            AblationMode::MaskedExtended => {
                c.attention = AttentionMode::AnchorExtended;
                c.anchors = AnchorSelection {
                    keep_fg: 1.0,
                    keep_bg: 0.0,
                    ..c.anchors
                };
            }
            _ => {}
        }
        c
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

impl std::str::FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL.into_iter().find(|m| m.key() == s).ok_or_else(|| {
            let keys: Vec<_> = AblationMode::ALL.iter().map(|m| m.key()).collect();
            Error::Config(format!("unknown mode `{s}` ({})", keys.join("|")))
        })
    }
}

/// Runs one ablation mode. `planner` serves every mode except
/// `no_vlm_protocol`, which always uses the naive planner.
pub fn run_ablation(
    mode: AblationMode,
    video: &VideoClip,
    instruction: &str,
    labels: &[String],
    base: &EditConfig,
    planner: &dyn Planner,
    ctx: &EditContext<'_>,
) -> Result<EditResult> {
    let config = mode.configure(base);
    let planner: &dyn Planner = if mode == AblationMode::NoVlmProtocol {
        &NaivePlanner
    } else {
        planner
    };
    let mut result = match mode.sdedit_strength() {
        Some(s) => edit_sdedit(video, instruction, labels, s, &config, planner, ctx)?,
        None => edit(video, instruction, labels, &config, planner, ctx)?,
    };
    result.manifest = result.manifest.param("ablation", &mode)?;
    Ok(result)
}
