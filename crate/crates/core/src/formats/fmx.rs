//! `.fmx` masked feature matrices.
//!
//! Layout: one JSON header line terminated by LF, then `rows × cols`
//! little-endian `f32` values in row-major order, then the presence mask as
//! `rows` runs of `ceil(groups / 8)` bytes. Bit `g % 8` of byte `g / 8`
//! (least significant bit first) is set iff group `g` is present.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureGroup, FeatureSchema, MaskedMatrix};

pub const FMX_MAGIC: &str = "FMX1";
const HEADER_PREFIX: &[u8] = b"{\"magic\":\"FMX1\"";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    magic: String,
    rows: usize,
    cols: usize,
    dtype: String,
    groups: Vec<FeatureGroup>,
    schema_hash: String,
}

fn mask_stride(groups: usize) -> usize {
    groups.div_ceil(8)
}

pub fn encode_fmx(m: &MaskedMatrix) -> Result<Vec<u8>> {
    let schema = m.schema();
    let header = Header {
        magic: FMX_MAGIC.to_string(),
        rows: m.rows(),
        cols: m.cols(),
        dtype: "f32le".to_string(),
        groups: schema.groups().to_vec(),
        schema_hash: schema.schema_hash_hex(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(m.values().len() * 4 + m.rows() * mask_stride(schema.len()));
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let g = schema.len();
    for row in m.mask().chunks(g.max(1)).take(m.rows()) {
        let mut bytes = vec![0u8; mask_stride(g)];
        for (k, &bit) in row.iter().enumerate() {
            if bit {
                bytes[k / 8] |= 1 << (k % 8);
            }
        }
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

/// Decodes an `.fmx` payload. When `expected` is given its hash must match the file's.
pub fn decode_fmx(bytes: &[u8], expected: Option<&FeatureSchema>) -> Result<MaskedMatrix> {
    if !bytes.starts_with(HEADER_PREFIX) {
        return Err(Error::BadMagic { expected: FMX_MAGIC });
    }
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(Error::Truncated { expected: bytes.len() + 1, found: bytes.len() })?;
    let header: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Format(format!("fmx header: {e}")))?;
    if header.magic != FMX_MAGIC {
        return Err(Error::BadMagic { expected: FMX_MAGIC });
    }
    if header.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    let schema = FeatureSchema::from_groups(header.groups)?;
    if schema.dim() != header.cols {
        return Err(Error::Format(format!("groups span {} columns but header says {}", schema.dim(), header.cols)));
    }
    let found = schema.schema_hash_hex();
    if found != header.schema_hash {
        return Err(Error::SchemaMismatch { expected: header.schema_hash, found });
    }
    if let Some(exp) = expected {
        if exp.schema_hash() != schema.schema_hash() {
            return Err(Error::SchemaMismatch { expected: exp.schema_hash_hex(), found });
        }
    }

    let (rows, cols, g) = (header.rows, header.cols, schema.len());
    let stride = mask_stride(g);
    let payload = &bytes[nl + 1..];
    let need = rows * cols * 4 + rows * stride;
    if payload.len() < need {
        return Err(Error::Truncated { expected: need, found: payload.len() });
    }
    if payload.len() > need {
        return Err(Error::Format(format!("{} trailing bytes", payload.len() - need)));
    }
    let (vals, mask_bytes) = payload.split_at(rows * cols * 4);
    let values = vals.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let mut mask = Vec::with_capacity(rows * g);
    for row in mask_bytes.chunks(stride.max(1)).take(rows) {
        for k in 0..g {
            mask.push(row[k / 8] >> (k % 8) & 1 == 1);
        }
    }
    MaskedMatrix::from_parts(schema, rows, values, mask)
}

pub fn write_feature_matrix(m: &MaskedMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_fmx(m)?)?;
    Ok(())
}

pub fn read_feature_matrix(path: &Path, expected: Option<&FeatureSchema>) -> Result<MaskedMatrix> {
    decode_fmx(&fs::read(path)?, expected)
}
