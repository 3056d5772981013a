//! Run directories: one per command invocation, immutable once written.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Failure with a machine-readable category that is not a library error.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn dependency(what: &Path, stage: &str) -> anyhow::Error {
    CliError {
        category: "dependency",
        message: format!("{} not found: run `{stage}` first", what.display()),
    }
    .into()
}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    CliError {
        category: "usage",
        message: message.into(),
    }
    .into()
}

/// Requires `path` to exist, naming the stage that produces it otherwise.
pub fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(dependency(path, stage))
    }
}

/// Creates a fresh run directory. An existing one is an error unless
/// `force`, in which case it is removed first.
pub fn create(dir: &Path, force: bool) -> Result<PathBuf> {
    if dir.exists() {
        if !force {
            return Err(CliError {
                category: "run-exists",
                message: format!("{} already exists (pass --force to overwrite)", dir.display()),
            }
            .into());
        }
        std::fs::remove_dir_all(dir).with_context(|| format!("removing {}", dir.display()))?;
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

/// Category for exit reporting.
pub fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.category;
        }
        if let Some(e) = cause.downcast_ref::<vfxaug::Error>() {
            return e.category();
        }
    }
    "internal"
}

pub fn exit_code(category: &str) -> i32 {
    match category {
        "usage" | "config" => 2,
        "dependency" => 3,
        "run-exists" => 4,
        "io" | "format" => 5,
        "planner" | "schema" | "transport" => 6,
        "segmentation" | "metrics" => 7,
        "invalid-input" | "vocabulary" | "attention" | "training" => 8,
        _ => 1,
    }
}
