//! Synthetic corpora where family identity lives in function names and
//! malware type lives in call-graph shape.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::hashing::fnv1a64;
use crate::extract::EmbeddingTable;
use crate::formats::{write_edges, write_records, EDGES_FILE, EMBEDDINGS_FILE, RECORDS_FILE};
use crate::types::{Adjacency, Code, CorpusIndex, FunctionRecord, IndexEntry, Instructions, ACCESS_FLAGS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// A long call chain with a few shortcuts.
    ChainHeavy,
    /// Dispatchers calling fans of three to eight leaves.
    StarHeavy,
    /// Uniformly random calls, about 1.5 per function.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub families: usize,
    pub types_per_family: usize,
    pub samples_per_type: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Probability that a non-root function is an external API call.
    pub external_fraction: f64,
    /// Probability that a name token comes from the family's signature set.
    pub strength: f64,
    /// Structure of type `t` is `structures[t % len]`.
    pub structures: Vec<Structure>,
    pub signature_size: usize,
    pub noise_tokens: usize,
    pub embedding_dim: usize,
    pub embedding_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            families: 5,
            types_per_family: 2,
            samples_per_type: 10,
            min_nodes: 10,
            max_nodes: 40,
            external_fraction: 0.3,
            strength: 0.9,
            structures: vec![Structure::ChainHeavy, Structure::StarHeavy, Structure::Random],
            signature_size: 8,
            noise_tokens: 64,
            embedding_dim: 64,
            embedding_noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.families < 1 {
            v.push("synth.families must be >= 1".to_string());
        }
        if self.types_per_family < 1 {
            v.push("synth.types_per_family must be >= 1".to_string());
        }
        if self.samples_per_type < 1 {
            v.push("synth.samples_per_type must be >= 1".to_string());
        }
        if self.min_nodes < 1 || self.min_nodes > self.max_nodes {
            v.push(format!("synth node range [{}, {}] is invalid", self.min_nodes, self.max_nodes));
        }
        if !(0.0..1.0).contains(&self.external_fraction) {
            v.push("synth.external_fraction must lie in [0, 1)".to_string());
        }
        if !(0.0..=1.0).contains(&self.strength) {
            v.push("synth.strength must lie in [0, 1]".to_string());
        }
        if self.structures.is_empty() {
            v.push("synth.structures must not be empty".to_string());
        }
        if self.signature_size < 1 || self.noise_tokens < 1 {
            v.push("synth token pools must be non-empty".to_string());
        }
        if self.embedding_dim < self.families {
            v.push(format!("synth.embedding_dim {} below family count {}", self.embedding_dim, self.families));
        }
        if !(self.embedding_noise.is_finite() && self.embedding_noise >= 0.0) {
            v.push("synth.embedding_noise must be non-negative".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn structure_of_type(&self, t: usize) -> Structure {
        self.structures[t % self.structures.len()]
    }
}

pub fn family_name(f: usize) -> String {
    format!("family{f:02}")
}

pub fn type_name(t: usize) -> String {
    format!("type{t:02}")
}

pub fn sample_name(f: usize, t: usize, k: usize) -> String {
    format!("f{f:02}t{t:02}s{k:05}")
}

/// One generated sample before it is written out.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub entry: IndexEntry,
    pub adjacency: Adjacency,
    pub records: Vec<FunctionRecord>,
    pub embeddings: EmbeddingTable,
}

const FRAMEWORK: [(&[&str], &str); 8] = [
    (&["android", "app", "Activity"], "onCreate"),
    (&["java", "lang", "String"], "valueOf"),
    (&["java", "lang", "StringBuilder"], "append"),
    (&["android", "util", "Log"], "d"),
    (&["java", "io", "File"], "exists"),
    (&["android", "content", "Context"], "getSystemService"),
    (&["java", "net", "URL"], "openConnection"),
    (&["java", "lang", "Object"], "toString"),
];
const VALUE_TYPES: [&str; 6] = ["int", "boolean", "void", "java.lang.String", "long", "android.os.Bundle"];
const OPCODES: [&str; 10] = [
    "invoke-virtual",
    "invoke-static",
    "const-string",
    "move-result",
    "return-void",
    "iget-object",
    "if-eqz",
    "new-instance",
    "goto",
    "add-int",
];
const STRINGS: [&str; 8] =
    ["/sdcard/tmp", "http://example.org/a", "config", "%s:%d", "10.0.0.1", "DexClassLoader", "ok", "error"];

struct Gen<'a> {
    cfg: &'a SyntheticConfig,
    family: usize,
    rng: ChaCha8Rng,
}

impl Gen<'_> {
    fn token(&mut self) -> String {
        if self.rng.gen_bool(self.cfg.strength) {
            format!("sig{}x{}", self.family, self.rng.gen_range(0..self.cfg.signature_size))
        } else {
            format!("tok{}", self.rng.gen_range(0..self.cfg.noise_tokens))
        }
    }

    fn internal(&mut self) -> FunctionRecord {
        let class_name = vec!["com".to_string(), self.token(), self.token()];
        let method_name = self.token();
        let num_params = self.rng.gen_range(0..=2);
        let param_types = (0..num_params).map(|_| VALUE_TYPES.choose(&mut self.rng).unwrap().to_string()).collect();
        let return_type = VALUE_TYPES.choose(&mut self.rng).unwrap().to_string();
        let n_flags = self.rng.gen_range(1..=2);
        let access_flags = ACCESS_FLAGS.choose_multiple(&mut self.rng, n_flags).map(|s| s.to_string()).collect();
        let len = self.rng.gen_range(8..=64);
        let bytes: Vec<u8> = (0..len).map(|_| self.rng.gen()).collect();
        let opcodes =
            (0..self.rng.gen_range(3..=6)).map(|_| OPCODES.choose(&mut self.rng).unwrap().to_string()).collect();
        let strings =
            (0..self.rng.gen_range(0..=2)).map(|_| STRINGS.choose(&mut self.rng).unwrap().to_string()).collect();
        FunctionRecord {
            class_name,
            method_name,
            num_params,
            param_types,
            return_type,
            access_flags,
            num_registers: Some(self.rng.gen_range(1..=16)),
            code: Some(Code { length: len as u64, bytes }),
            instructions: Some(Instructions { count: len as u64 / 2, opcodes, cached: self.rng.gen_bool(0.5) }),
            strings: Some(strings),
            external: false,
        }
    }

    fn external(&mut self) -> FunctionRecord {
        let (class, method) = FRAMEWORK[self.rng.gen_range(0..FRAMEWORK.len())];
        FunctionRecord::external(class, method)
    }

    fn edges(&mut self, structure: Structure, n: usize) -> Vec<(u32, u32)> {
        let mut edges = Vec::new();
        let extra = match structure {
            Structure::ChainHeavy => {
                edges.extend((1..n as u32).map(|i| (i - 1, i)));
                n / 10
            }
            Structure::StarHeavy => {
                // Dispatchers each calling a fan of leaves, chained together.
                let mut hub = 0;
                while hub < n {
                    let fan = self.rng.gen_range(3..=8);
                    let end = (hub + fan).min(n - 1);
                    edges.extend((hub + 1..=end).map(|leaf| (hub as u32, leaf as u32)));
                    if end + 1 < n {
                        edges.push((hub as u32, (end + 1) as u32));
                    }
                    hub = end + 1;
                }
                n / 10
            }
            Structure::Random => 3 * n / 2,
        };
        for _ in 0..extra {
            edges.push((self.rng.gen_range(0..n as u32), self.rng.gen_range(0..n as u32)));
        }
        edges
    }
}

/// Generates one sample; its randomness depends only on the config seed and
/// the sample id.
pub fn generate_sample(cfg: &SyntheticConfig, f: usize, t: usize, k: usize) -> Result<SyntheticSample> {
    let sample_id = sample_name(f, t, k);
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ fnv1a64(sample_id.as_bytes()));
    let mut g = Gen { cfg, family: f, rng };
    let n = g.rng.gen_range(cfg.min_nodes..=cfg.max_nodes);
    let adjacency = Adjacency::new(n, g.edges(cfg.structure_of_type(t), n))?;
    let mut records = Vec::with_capacity(n);
    let mut embeddings = EmbeddingTable::new(cfg.embedding_dim)?;
    for i in 0..n {
        let external = i > 0 && g.rng.gen_bool(cfg.external_fraction);
        if external {
            records.push(g.external());
            continue;
        }
        records.push(g.internal());
        let v: Vec<f32> = (0..cfg.embedding_dim)
            .map(|j| {
                let signal = if j == f { cfg.strength } else { 0.0 };
                (signal + cfg.embedding_noise * g.rng.gen_range(-1.0..1.0)) as f32
            })
            .collect();
        embeddings.insert(i as u32, v)?;
    }
    let entry = IndexEntry {
        sample_id: sample_id.clone(),
        family: family_name(f),
        type_name: type_name(t),
        node_count: n,
        path: Path::new(&family_name(f)).join(type_name(t)).join(&sample_id),
    };
    Ok(SyntheticSample { entry, adjacency, records, embeddings })
}

/// Writes `out/<family>/<type>/<sample_id>/` for every sample, in parallel.
/// Index paths are relative to `out`.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig, out: &Path) -> Result<CorpusIndex> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.families)
        .flat_map(|f| (0..cfg.types_per_family).flat_map(move |t| (0..cfg.samples_per_type).map(move |k| (f, t, k))))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(f, t, k)| {
            let s = generate_sample(cfg, f, t, k)?;
            let dir = out.join(&s.entry.path);
            fs::create_dir_all(&dir)?;
            write_edges(&s.adjacency, &dir.join(EDGES_FILE))?;
            write_records(&s.records, &dir.join(RECORDS_FILE))?;
            s.embeddings.write(&dir.join(EMBEDDINGS_FILE))?;
            Ok(s.entry)
        })
        .collect::<Result<Vec<_>>>()?;
    CorpusIndex::new(entries)
}
