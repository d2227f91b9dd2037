//! Versioned tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"SERDCKPT" | u32 version | u64 header length | header JSON | f64 values
//! ```
//!
//! The header lists the tensor names and shapes in order together with a
//! free-form `kind` tag and `meta` object (model configuration, skeleton).
//! Values follow in the same order, row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::Mat;
use super::params::ParamStore;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SERDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Mat)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for (name, value) in store.iter() {
            self.tensors
                .push((format!("{prefix}{name}"), (**value).clone()));
        }
    }

    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        store.load_from(self.tensors.iter().map(|(n, v)| (n.as_str(), v)), prefix)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, v)| TensorEntry {
                    name: name.clone(),
                    shape: [v.nrows(), v.ncols()],
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let scalars: usize = self.tensors.iter().map(|(_, v)| v.len()).sum();
        let mut out = Vec::with_capacity(20 + header.len() + 8 * scalars);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, v) in &self.tensors {
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |m: &str| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes
            .get(20..20 + header_len)
            .ok_or_else(|| fail("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut offset = 20 + header_len;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n = entry.shape[0] * entry.shape[1];
            let raw = bytes
                .get(offset..offset + 8 * n)
                .ok_or_else(|| fail(&format!("truncated tensor {}", entry.name)))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += 8 * n;
            let m = Mat::from_shape_vec((entry.shape[0], entry.shape[1]), values)
                .expect("shape checked");
            tensors.push((entry.name, m));
        }
        if offset != bytes.len() {
            return Err(fail("trailing bytes"));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )))
        }
    }
}
