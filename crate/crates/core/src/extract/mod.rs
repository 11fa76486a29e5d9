//! Node feature extraction: metadata, code embeddings and local degree
//! profiles, concatenated into a masked node-feature matrix.

pub mod embeddings;
pub mod hashing;
pub mod histogram;
pub mod ldp;
pub mod meta;
pub mod strings;

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{load_sample, RawSample, EDGES_FILE, EMBEDDINGS_FILE, RECORDS_FILE};
use crate::types::{Adjacency, AttributedGraph, CorpusIndex, FeatureSchema, FunctionRecord, MaskedMatrix};

pub use embeddings::{ingest_embeddings, EmbeddingTable};
pub use hashing::{hash_tokens, HASH_WIDTH};
pub use histogram::{byte_entropy_histogram, byte_histogram};
pub use ldp::{ldp_features, LDP_WIDTH};
pub use meta::{meta_features, MetaVector, META_DIM, META_GROUPS, UNIVERSAL_META_GROUPS};
pub use strings::{string_stats, StringStats};

pub const LLM_GROUP: &str = "llm";
pub const LDP_GROUP: &str = "ldp";
pub const DEFAULT_LLM_DIM: usize = 64;

/// Which feature families make up a node's vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub meta: bool,
    pub llm: bool,
    pub ldp: bool,
    pub llm_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { meta: true, llm: false, ldp: true, llm_dim: DEFAULT_LLM_DIM }
    }
}

impl FeatureConfig {
    pub fn ldp_only() -> Self {
        FeatureConfig { meta: false, llm: false, ldp: true, llm_dim: DEFAULT_LLM_DIM }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.meta || self.llm || self.ldp) {
            return Err(Error::Config("feature configuration selects no feature family".into()));
        }
        if self.llm && self.llm_dim == 0 {
            return Err(Error::Config("llm_dim must be positive".into()));
        }
        Ok(())
    }

    /// Schema of the concatenated `meta ∥ llm ∥ ldp` vector.
    pub fn schema(&self) -> Result<FeatureSchema> {
        self.validate()?;
        let mut groups: Vec<(String, usize, bool)> = Vec::new();
        if self.meta {
            groups.extend(
                META_GROUPS.iter().enumerate().map(|(i, &(name, w))| (name.to_string(), w, i < UNIVERSAL_META_GROUPS)),
            );
        }
        if self.llm {
            groups.push((LLM_GROUP.into(), self.llm_dim, false));
        }
        if self.ldp {
            groups.push((LDP_GROUP.into(), LDP_WIDTH, true));
        }
        FeatureSchema::new(groups)
    }
}

impl FromStr for FeatureConfig {
    type Err = Error;

    /// Parses a comma list such as `meta,llm,ldp`.
    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = FeatureConfig { meta: false, llm: false, ldp: false, llm_dim: DEFAULT_LLM_DIM };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "meta" => cfg.meta = true,
                "llm" => cfg.llm = true,
                "ldp" => cfg.ldp = true,
                other => return Err(Error::Config(format!("unknown feature family {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Topology extraction: the call graph's adjacency, as loaded from disk.
pub fn build_adjacency(edges_path: &Path, records_path: &Path) -> Result<Adjacency> {
    load_sample(edges_path, records_path).map(|s| s.adjacency)
}

/// Builds the masked node-feature matrix for one sample.
pub fn assemble_features(
    sample_id: &str,
    adjacency: &Adjacency,
    records: &[FunctionRecord],
    embeddings: Option<&EmbeddingTable>,
    config: &FeatureConfig,
) -> Result<AttributedGraph> {
    let n = adjacency.n();
    if records.len() != n {
        return Err(Error::Shape(format!("sample {sample_id}: {} records for {n} nodes", records.len())));
    }
    let schema = config.schema()?;
    if let Some(t) = embeddings {
        if config.llm && t.dim() != config.llm_dim {
            return Err(Error::Shape(format!(
                "sample {sample_id}: embedding dimension {} but configured llm_dim {}",
                t.dim(),
                config.llm_dim
            )));
        }
    }
    let mut x = MaskedMatrix::new(schema, n);
    let mut group = 0;
    if config.meta {
        for (i, r) in records.iter().enumerate() {
            r.validate(i)?;
            let m = meta_features(r);
            for g in 0..META_GROUPS.len() {
                if m.present[g] {
                    x.set_group(i, group + g, m.group(g));
                }
            }
        }
        group += META_GROUPS.len();
    }
    if config.llm {
        if let Some(t) = embeddings {
            for i in 0..n {
                if let Some(v) = t.get(i) {
                    x.set_group(i, group, v);
                }
            }
        }
        group += 1;
    }
    if config.ldp {
        for (i, row) in ldp_features(adjacency).iter().enumerate() {
            let row: Vec<f32> = row.iter().map(|&v| v as f32).collect();
            x.set_group(i, group, &row);
        }
    }
    AttributedGraph::new(sample_id, adjacency.clone(), x)
}

/// Extracts every indexed sample under `root` in parallel, in index order.
/// Embedding files are read only when the configuration asks for them; a
/// sample without one simply has no embedded nodes.
pub fn extract_corpus(root: &Path, index: &CorpusIndex, config: &FeatureConfig) -> Result<Vec<AttributedGraph>> {
    config.validate()?;
    index
        .entries
        .par_iter()
        .map(|e| {
            let dir = root.join(&e.path);
            let raw = load_sample(&dir.join(EDGES_FILE), &dir.join(RECORDS_FILE))?;
            let emb_path = dir.join(EMBEDDINGS_FILE);
            let table = if config.llm && emb_path.is_file() {
                Some(ingest_embeddings(&emb_path, raw.records.len())?)
            } else {
                None
            };
            let mut g = extract_sample(&e.sample_id, &raw, table.as_ref(), config)?;
            g.label = Some(e.label());
            Ok(g)
        })
        .collect()
}

/// Convenience wrapper over [`assemble_features`] for a loaded sample.
pub fn extract_sample(
    sample_id: &str,
    raw: &RawSample,
    embeddings: Option<&EmbeddingTable>,
    config: &FeatureConfig,
) -> Result<AttributedGraph> {
    assemble_features(sample_id, &raw.adjacency, &raw.records, embeddings, config)
}
