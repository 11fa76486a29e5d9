//! Domain types shared across the pipeline.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::hashing::fnv1a64;

/// The access-flag vocabulary, in multi-hot order.
pub const ACCESS_FLAGS: [&str; 14] = [
    "public",
    "private",
    "protected",
    "static",
    "final",
    "synchronized",
    "bridge",
    "varargs",
    "native",
    "interface",
    "abstract",
    "strictfp",
    "synthetic",
    "constructor",
];

/// Raw analysis output for one function (one node of the call graph).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionRecord {
    pub class_name: Vec<String>,
    pub method_name: String,
    pub num_params: u32,
    pub param_types: Vec<String>,
    pub return_type: String,
    pub access_flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_registers: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<Code>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructions: Option<Instructions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strings: Option<Vec<String>>,
    pub external: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Code {
    pub length: u64,
    #[serde(rename = "bytes_b64", with = "b64")]
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instructions {
    pub count: u64,
    pub opcodes: Vec<String>,
    pub cached: bool,
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

impl FunctionRecord {
    /// Checks the record invariants. `node` is only used for error messages.
    pub fn validate(&self, node: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Record { node, msg });
        if self.num_params as usize != self.param_types.len() {
            return fail(format!("num_params is {} but {} param_types given", self.num_params, self.param_types.len()));
        }
        if let Some(flag) = self.access_flags.iter().find(|f| !ACCESS_FLAGS.contains(&f.as_str())) {
            return fail(format!("unknown access flag {flag:?}"));
        }
        if self.external && (self.code.is_some() || self.instructions.is_some() || self.strings.is_some()) {
            return fail("external function carries code, instructions or strings".into());
        }
        if let Some(code) = &self.code {
            if code.length != code.bytes.len() as u64 {
                return fail(format!("code length {} disagrees with {} decoded bytes", code.length, code.bytes.len()));
            }
        }
        Ok(())
    }

    /// A minimal external (API) function record.
    pub fn external(class_name: &[&str], method_name: &str) -> Self {
        FunctionRecord {
            class_name: class_name.iter().map(|s| s.to_string()).collect(),
            method_name: method_name.to_string(),
            num_params: 0,
            param_types: Vec::new(),
            return_type: "void".to_string(),
            access_flags: Vec::new(),
            num_registers: None,
            code: None,
            instructions: None,
            strings: None,
            external: true,
        }
    }
}

/// Class identity of a sample: the (family, type) pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub family: String,
    #[serde(rename = "type")]
    pub type_name: String,
}

impl Label {
    pub fn new(family: impl Into<String>, type_name: impl Into<String>) -> Result<Self> {
        let (family, type_name) = (family.into(), type_name.into());
        if family.is_empty() || type_name.is_empty() {
            return Err(Error::Config("label family and type must be non-empty".into()));
        }
        Ok(Label { family, type_name })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    pub universal: bool,
}

/// Ordered feature groups laid out contiguously over the columns of a node-feature matrix.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FeatureSchema {
    groups: Vec<FeatureGroup>,
}

impl FeatureSchema {
    /// Builds a schema from `(name, width, universal)` triples, assigning contiguous offsets.
    pub fn new<S: Into<String>>(groups: impl IntoIterator<Item = (S, usize, bool)>) -> Result<Self> {
        let mut offset = 0;
        let mut out = Vec::new();
        let mut names = BTreeSet::new();
        for (name, width, universal) in groups {
            let name = name.into();
            if width == 0 {
                return Err(Error::Config(format!("feature group {name:?} has zero width")));
            }
            if !names.insert(name.clone()) {
                return Err(Error::Config(format!("duplicate feature group {name:?}")));
            }
            out.push(FeatureGroup { name, offset, width, universal });
            offset += width;
        }
        Ok(FeatureSchema { groups: out })
    }

    /// Validates an explicit group list (e.g. read from a file header).
    pub fn from_groups(groups: Vec<FeatureGroup>) -> Result<Self> {
        let mut expected = 0;
        for g in &groups {
            if g.offset != expected {
                return Err(Error::Format(format!(
                    "group {:?} starts at {} but the previous group ends at {expected}",
                    g.name, g.offset
                )));
            }
            expected += g.width;
        }
        let rebuilt = FeatureSchema::new(groups.iter().map(|g| (g.name.clone(), g.width, g.universal)))?;
        Ok(rebuilt)
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.groups.last().map_or(0, |g| g.offset + g.width)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    /// Keeps the groups whose index satisfies `keep`, preserving order.
    pub fn retain_groups(&self, mut keep: impl FnMut(usize) -> bool) -> FeatureSchema {
        let kept = self
            .groups
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, g)| (g.name.clone(), g.width, g.universal));
        FeatureSchema::new(kept).expect("subset of a valid schema is valid")
    }

    /// 64-bit FNV-1a digest of the ordered (name, width, universal) list.
    pub fn schema_hash(&self) -> u64 {
        let mut buf = Vec::new();
        for g in &self.groups {
            buf.extend_from_slice(g.name.as_bytes());
            buf.push(0);
            buf.extend_from_slice(&(g.width as u64).to_le_bytes());
            buf.push(g.universal as u8);
        }
        fnv1a64(&buf)
    }

    pub fn schema_hash_hex(&self) -> String {
        format!("{:016x}", self.schema_hash())
    }
}

impl Serialize for FeatureSchema {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.groups.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureSchema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let groups = Vec::<FeatureGroup>::deserialize(d)?;
        FeatureSchema::from_groups(groups).map_err(serde::de::Error::custom)
    }
}

/// Directed 0/1 adjacency stored as a sorted, duplicate-free edge list.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Adjacency {
    n: usize,
    edges: Vec<(u32, u32)>,
}

impl Adjacency {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut edges: Vec<(u32, u32)> = edges.into_iter().collect();
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s as usize >= n || d as usize >= n) {
            let endpoint = if s as usize >= n { s } else { d };
            return Err(Error::EdgeBounds { endpoint: endpoint as u64, n, line: 0 });
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Adjacency { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.edges.binary_search(&(src as u32, dst as u32)).is_ok()
    }

    /// Neighbor lists of the undirected view: in- and out-neighbors merged,
    /// deduplicated, self-loops dropped. Lists are sorted ascending.
    pub fn undirected_neighbors(&self) -> Vec<Vec<u32>> {
        let mut nbrs = vec![Vec::new(); self.n];
        for &(s, d) in &self.edges {
            if s != d {
                nbrs[s as usize].push(d);
                nbrs[d as usize].push(s);
            }
        }
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
        }
        nbrs
    }

    /// Induced subgraph on `keep` (ascending old ids), compacting ids in order.
    pub fn induced(&self, keep: &[usize]) -> Adjacency {
        let mut remap = vec![u32::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new as u32;
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|&(s, d)| {
                let (s, d) = (remap[s as usize], remap[d as usize]);
                (s != u32::MAX && d != u32::MAX).then_some((s, d))
            })
            .collect();
        Adjacency { n: keep.len(), edges }
    }
}

/// Row-major `rows × schema.dim()` matrix with a per-(row, group) presence mask.
///
/// Values of absent groups are stored as zeros but carry no meaning.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMatrix {
    schema: FeatureSchema,
    rows: usize,
    values: Vec<f32>,
    mask: Vec<bool>,
}

impl MaskedMatrix {
    /// All-absent matrix of the given shape.
    pub fn new(schema: FeatureSchema, rows: usize) -> Self {
        let (d, g) = (schema.dim(), schema.len());
        MaskedMatrix { schema, rows, values: vec![0.0; rows * d], mask: vec![false; rows * g] }
    }

    pub fn from_parts(schema: FeatureSchema, rows: usize, values: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != rows * schema.dim() || mask.len() != rows * schema.len() {
            return Err(Error::Shape(format!(
                "{} values / {} mask bits for {rows} rows of width {} with {} groups",
                values.len(),
                mask.len(),
                schema.dim(),
                schema.len()
            )));
        }
        Ok(MaskedMatrix { schema, rows, values, mask })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.schema.dim()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn present(&self, row: usize, group: usize) -> bool {
        self.mask[row * self.schema.len() + group]
    }

    pub fn row_complete(&self, row: usize) -> bool {
        let g = self.schema.len();
        self.mask[row * g..(row + 1) * g].iter().all(|&b| b)
    }

    pub fn is_fully_present(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    /// Marks `group` present on `row` and stores its values.
    pub fn set_group(&mut self, row: usize, group: usize, data: &[f32]) {
        let g = &self.schema.groups[group];
        assert_eq!(data.len(), g.width, "group {} width", g.name);
        let start = row * self.schema.dim() + g.offset;
        self.values[start..start + g.width].copy_from_slice(data);
        self.mask[row * self.schema.len() + group] = true;
    }

    pub fn group_values(&self, row: usize, group: usize) -> Option<&[f32]> {
        if !self.present(row, group) {
            return None;
        }
        let g = &self.schema.groups[group];
        let start = row * self.schema.dim() + g.offset;
        Some(&self.values[start..start + g.width])
    }
}

/// A call graph with its masked node-feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    pub sample_id: String,
    pub label: Option<Label>,
    pub adjacency: Adjacency,
    pub features: MaskedMatrix,
}

impl AttributedGraph {
    pub fn new(sample_id: impl Into<String>, adjacency: Adjacency, features: MaskedMatrix) -> Result<Self> {
        if adjacency.n() != features.rows() {
            return Err(Error::Shape(format!(
                "adjacency has {} nodes but feature matrix has {} rows",
                adjacency.n(),
                features.rows()
            )));
        }
        Ok(AttributedGraph { sample_id: sample_id.into(), label: None, adjacency, features })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.features.schema()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub sample_id: String,
    pub family: String,
    #[serde(rename = "type")]
    pub type_name: String,
    pub node_count: usize,
    pub path: PathBuf,
}

impl IndexEntry {
    pub fn label(&self) -> Label {
        Label { family: self.family.clone(), type_name: self.type_name.clone() }
    }
}

/// Per-sample metadata for a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub entries: Vec<IndexEntry>,
}

impl CorpusIndex {
    pub fn new(entries: Vec<IndexEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.sample_id.as_str()) {
                return Err(Error::Config(format!("duplicate sample id {:?}", e.sample_id)));
            }
            if e.node_count == 0 {
                return Err(Error::Config(format!("sample {:?} has no nodes", e.sample_id)));
            }
        }
        Ok(CorpusIndex { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.sample_id == sample_id)
    }
}
