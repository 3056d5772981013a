//! Binary tensor files and named tensor bundles.
//!
//! Tensor record layout (all integers little-endian):
//!
//! ```text
//! magic  "VFXT"      4 bytes
//! dtype  u8          1 = float32
//! rank   u8
//! pad    u16         zero
//! dims   u64 x rank
//! data   f32 x prod(dims), row-major
//! ```
//!
//! A bundle is `"VFXB"`, a `u32` entry count, then per entry a `u32` name
//! length, the UTF-8 name, a `u64` record length and the tensor record.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"VFXT";
pub const BUNDLE_MAGIC: &[u8; 4] = b"VFXB";
pub const DTYPE_F32: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::Format(format!("rank {} too large", dims.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("header shorter than 8 bytes".into()));
        }
        if &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        if bytes[4] != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype code {}", bytes[4])));
        }
        let rank = bytes[5] as usize;
        let header = 8 + 8 * rank;
        if bytes.len() < header {
            return Err(Error::Format("header truncated in dims".into()));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut n: usize = 1;
        for r in 0..rank {
            let raw = u64::from_le_bytes(bytes[8 + 8 * r..16 + 8 * r].try_into().unwrap());
            let d = usize::try_from(raw).map_err(|_| Error::Format(format!("dim {raw} too large")))?;
            n = n
                .checked_mul(d)
                .ok_or_else(|| Error::Format("element count overflows".into()))?;
            dims.push(d);
        }
        let expected = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let payload = &bytes[header..];
        if payload.len() != expected {
            return Err(Error::Truncated {
                expected,
                found: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(path: impl AsRef<Path>, t: &TensorFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorFile::from_bytes(&bytes)
}

pub fn bundle_to_bytes(entries: &BTreeMap<String, TensorFile>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rec = t.to_bytes();
        out.extend_from_slice(&(rec.len() as u64).to_le_bytes());
        out.extend_from_slice(&rec);
    }
    out
}

pub fn bundle_from_bytes(bytes: &[u8]) -> Result<BTreeMap<String, TensorFile>> {
    let mut cur = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(cur..cur + n).ok_or(Error::Truncated {
            expected: cur + n,
            found: bytes.len(),
        })?;
        cur += n;
        Ok(s)
    };
    if take(4)? != BUNDLE_MAGIC {
        return Err(Error::Format("bad bundle magic".into()));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let nlen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(nlen)?.to_vec()).map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
        let rlen = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let t = TensorFile::from_bytes(take(rlen)?)?;
        out.insert(name, t);
    }
    Ok(out)
}

pub fn write_bundle(path: impl AsRef<Path>, entries: &BTreeMap<String, TensorFile>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bundle_to_bytes(entries)).map_err(|e| Error::io(path, e))
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<BTreeMap<String, TensorFile>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    bundle_from_bytes(&bytes)
}
