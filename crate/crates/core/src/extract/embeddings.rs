//! Per-function code embeddings and the `.emb` file format.
//!
//! Layout: JSON header line `{"magic":"EMB1","dim":E,"count":K}` + LF, then
//! `K` entries of a little-endian `u32` node id followed by `E` little-endian `f32`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMB_MAGIC: &str = "EMB1";
const HEADER_PREFIX: &[u8] = b"{\"magic\":\"EMB1\"";

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<u32, Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    magic: String,
    dim: usize,
    count: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable { dim, entries: BTreeMap::new() })
    }

    pub fn insert(&mut self, node: u32, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding for node {node} has {} entries, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        self.entries.insert(node, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: usize) -> Option<&[f32]> {
        self.entries.get(&(node as u32)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f32])> {
        self.entries.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = Header { magic: EMB_MAGIC.into(), dim: self.dim, count: self.entries.len() };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        for (id, v) in &self.entries {
            out.extend_from_slice(&id.to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Decodes a table whose node ids must lie in `[0, n)`.
    pub fn decode(bytes: &[u8], n: usize) -> Result<Self> {
        if !bytes.starts_with(HEADER_PREFIX) {
            return Err(Error::BadMagic { expected: EMB_MAGIC });
        }
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(Error::Truncated { expected: bytes.len() + 1, found: bytes.len() })?;
        let header: Header =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Format(format!("emb header: {e}")))?;
        let mut table = EmbeddingTable::new(header.dim)?;
        let entry = 4 + 4 * header.dim;
        let payload = &bytes[nl + 1..];
        let need = entry * header.count;
        if payload.len() < need {
            return Err(Error::Truncated { expected: need, found: payload.len() });
        }
        if payload.len() > need {
            return Err(Error::Shape(format!(
                "{} bytes of entries do not divide into {} entries of dimension {}",
                payload.len(),
                header.count,
                header.dim
            )));
        }
        for chunk in payload.chunks_exact(entry) {
            let id = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if id as usize >= n {
                return Err(Error::Format(format!("embedding node id {id} out of range for {n} nodes")));
            }
            let v = chunk[4..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if table.entries.insert(id, v).is_some() {
                return Err(Error::Format(format!("duplicate embedding for node {id}")));
            }
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }
}

pub fn ingest_embeddings(path: &Path, n: usize) -> Result<EmbeddingTable> {
    EmbeddingTable::decode(&fs::read(path)?, n)
}
