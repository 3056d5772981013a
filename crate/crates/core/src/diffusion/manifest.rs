//! Run manifests: everything needed to reproduce a run, as TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Stage that produced the run (`train`, `invert`, `edit`, ...).
    pub kind: String,
    pub version: String,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub prompts: BTreeMap<String, String>,
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Free-form hyperparameters and processor settings.
    #[serde(default)]
    pub params: toml::Table,
}

impl RunManifest {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: BTreeMap::new(),
            prompts: BTreeMap::new(),
            inputs: BTreeMap::new(),
            params: toml::Table::new(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn prompt(mut self, name: &str, text: &str) -> Self {
        self.prompts.insert(name.to_string(), text.to_string());
        self
    }

    pub fn input(mut self, name: &str, path: &str) -> Self {
        self.inputs.insert(name.to_string(), path.to_string());
        self
    }

    /// Record a serializable parameter block under `name`.
    pub fn param<T: Serialize>(mut self, name: &str, value: &T) -> Result<Self> {
        let v = toml::Value::try_from(value).map_err(|e| Error::Config(format!("manifest param {name}: {e}")))?;
        self.params.insert(name.to_string(), v);
        Ok(self)
    }

    /// Read back a parameter block recorded with [`RunManifest::param`].
    pub fn get_param<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        let v = self
            .params
            .get(name)
            .ok_or_else(|| Error::Config(format!("manifest has no parameter `{name}`")))?;
        v.clone()
            .try_into()
            .map_err(|e| Error::Config(format!("manifest param {name}: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
