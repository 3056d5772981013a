//! Per-(step, block) source keys and values captured during inversion.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::dit::rope::{RopeConfig, RopeTable};
use crate::error::{Error, Result};
use crate::tensor::io::{read_bundle, write_bundle};
use crate::tensor::TensorFile;

/// Video-token keys (pre-RoPE) and values for one (step, block).
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub keys: Array2<f32>,
    pub values: Array2<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionCache {
    /// Spatiotemporal position of each cached token row.
    pub positions: Vec<[usize; 3]>,
    entries: BTreeMap<(usize, usize), CacheEntry>,
}

impl AttentionCache {
    pub fn new(positions: Vec<[usize; 3]>) -> Self {
        Self {
            positions,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, step: usize, block: usize, keys: Array2<f32>, values: Array2<f32>) -> Result<()> {
        if keys.nrows() != values.nrows() || keys.nrows() != self.positions.len() {
            return Err(Error::Shape(format!(
                "cache entry has {} keys, {} values, {} positions",
                keys.nrows(),
                values.nrows(),
                self.positions.len()
            )));
        }
        self.entries.insert((step, block), CacheEntry { keys, values });
        Ok(())
    }

    pub fn get(&self, step: usize, block: usize) -> Result<&CacheEntry> {
        self.entries
            .get(&(step, block))
            .ok_or(Error::MissingCacheEntry { step, block })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.keys().copied()
    }

    pub fn steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.entries.keys().map(|k| k.0).collect();
        s.dedup();
        s
    }

    /// True when every step in `steps` has an entry for every block.
    pub fn is_complete(&self, steps: impl IntoIterator<Item = usize>, blocks: usize) -> bool {
        steps
            .into_iter()
            .all(|s| (0..blocks).all(|b| self.entries.contains_key(&(s, b))))
    }

    pub fn rope_table(&self, cfg: &RopeConfig) -> RopeTable {
        RopeTable::from_grid(cfg, &self.positions)
    }

    /// Cached keys rotated at their stored positions.
    pub fn rotated_keys(&self, step: usize, block: usize, cfg: &RopeConfig) -> Result<Array2<f32>> {
        self.rope_table(cfg).apply(&self.get(step, block)?.keys)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut m = BTreeMap::new();
        let pos: Vec<f32> = self.positions.iter().flat_map(|p| p.map(|v| v as f32)).collect();
        m.insert("positions".to_string(), TensorFile::new(vec![self.positions.len(), 3], pos)?);
        for (&(s, b), e) in &self.entries {
            for (kind, arr) in [("k", &e.keys), ("v", &e.values)] {
                let t = TensorFile::new(vec![arr.nrows(), arr.ncols()], arr.iter().copied().collect())?;
                m.insert(format!("{kind}/{s:05}/{b:03}"), t);
            }
        }
        write_bundle(path, &m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut m = read_bundle(path)?;
        let pos = m
            .remove("positions")
            .ok_or_else(|| Error::Format("cache bundle has no positions".into()))?;
        if pos.dims.len() != 2 || pos.dims[1] != 3 {
            return Err(Error::Format("positions tensor must be N x 3".into()));
        }
        let positions = pos
            .data
            .chunks_exact(3)
            .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
            .collect();
        let mut cache = AttentionCache::new(positions);
        let to_arr = |t: TensorFile| -> Result<Array2<f32>> {
            if t.dims.len() != 2 {
                return Err(Error::Format("cache tensors must be rank 2".into()));
            }
            Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data).map_err(|e| Error::Format(e.to_string()))
        };
        let names: Vec<String> = m.keys().filter(|n| n.starts_with("k/")).cloned().collect();
        for name in names {
            let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad cache key {name}")));
            let parts: Vec<&str> = name.split('/').collect();
            if parts.len() != 3 {
                return Err(Error::Format(format!("bad cache key {name}")));
            }
            let (s, b) = (parse(parts[1])?, parse(parts[2])?);
            let k = m.remove(&name).expect("listed above");
            let v = m
                .remove(&format!("v/{}/{}", parts[1], parts[2]))
                .ok_or_else(|| Error::Format(format!("cache key {name} has no value tensor")))?;
            cache.insert(s, b, to_arr(k)?, to_arr(v)?)?;
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let pos = vec![[0, 0, 0], [0, 0, 1]];
        let mut c = AttentionCache::new(pos);
        c.insert(3, 1, Array2::from_elem((2, 4), 0.5), Array2::from_elem((2, 4), -1.0))
            .unwrap();
        c.insert(2, 0, Array2::from_elem((2, 4), 0.25), Array2::from_elem((2, 4), 2.0))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.bundle");
        c.save(&p).unwrap();
        let back = AttentionCache::load(&p).unwrap();
        assert_eq!(back, c);
        assert!(back.is_complete([2], 1));
        assert!(!back.is_complete([2], 2));
        assert!(matches!(back.get(9, 0), Err(Error::MissingCacheEntry { step: 9, block: 0 })));
    }

    #[test]
    fn rejects_unpaired_entries() {
        let mut c = AttentionCache::new(vec![[0, 0, 0]]);
        assert!(c
            .insert(0, 0, Array2::zeros((1, 2)), Array2::zeros((2, 2)))
            .is_err());
    }
}
