//! Collation of partially-defined node-feature matrices.
//!
//! With `C` the columns of every group missing on at least one node:
//! - Trim keeps only the columns outside `C`.
//! - Zero keeps everything and writes zeros into the missing entries.
//! - Prune keeps only nodes whose every group is present, together with the
//!   subgraph they induce. Nodes left isolated by the restriction stay.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AttributedGraph, FeatureSchema, MaskedMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Trim,
    Zero,
    Prune,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Trim => "trim",
            Scheme::Zero => "zero",
            Scheme::Prune => "prune",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trim" => Ok(Scheme::Trim),
            "zero" => Ok(Scheme::Zero),
            "prune" => Ok(Scheme::Prune),
            other => Err(Error::Config(format!("unknown collation scheme {other:?}"))),
        }
    }
}

/// What a collation removed. `id_map` pairs old and new node ids for prune.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollationReport {
    pub scheme: Scheme,
    pub sample_id: String,
    pub dims_removed: Vec<usize>,
    pub nodes_removed: Vec<usize>,
    pub output_dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub id_map: Vec<(usize, usize)>,
}

/// Group indices missing on at least one node.
pub fn non_universal_groups(x: &MaskedMatrix) -> BTreeSet<usize> {
    (0..x.schema().len()).filter(|&g| (0..x.rows()).any(|i| !x.present(i, g))).collect()
}

fn group_columns(schema: &FeatureSchema, groups: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
    groups
        .into_iter()
        .flat_map(|g| {
            let grp = &schema.groups()[g];
            grp.offset..grp.offset + grp.width
        })
        .collect()
}

/// The column set `C`.
pub fn non_universal_dims(g: &AttributedGraph) -> BTreeSet<usize> {
    group_columns(g.schema(), non_universal_groups(&g.features))
}

fn select_groups(g: &AttributedGraph, keep: &[usize], scheme: Scheme) -> Result<(AttributedGraph, CollationReport)> {
    let x = &g.features;
    let schema = x.schema();
    let keep_set: BTreeSet<usize> = keep.iter().copied().collect();
    let out_schema = schema.retain_groups(|i| keep_set.contains(&i));
    let mut out = MaskedMatrix::new(out_schema, x.rows());
    for i in 0..x.rows() {
        for (new_g, &old_g) in keep.iter().enumerate() {
            let vals = x.group_values(i, old_g).ok_or_else(|| {
                Error::Shape(format!(
                    "sample {}: group {:?} missing on node {i}",
                    g.sample_id,
                    schema.groups()[old_g].name
                ))
            })?;
            out.set_group(i, new_g, vals);
        }
    }
    let removed = (0..schema.len()).filter(|i| !keep_set.contains(i));
    let report = CollationReport {
        scheme,
        sample_id: g.sample_id.clone(),
        dims_removed: group_columns(schema, removed).into_iter().collect(),
        nodes_removed: Vec::new(),
        output_dim: out.cols(),
        id_map: Vec::new(),
    };
    let mut graph = AttributedGraph::new(g.sample_id.clone(), g.adjacency.clone(), out)?;
    graph.label = g.label.clone();
    Ok((graph, report))
}

/// Per-sample Trim.
pub fn trim(g: &AttributedGraph) -> Result<(AttributedGraph, CollationReport)> {
    let missing = non_universal_groups(&g.features);
    let keep: Vec<usize> = (0..g.schema().len()).filter(|i| !missing.contains(i)).collect();
    if keep.is_empty() {
        return Err(Error::Empty(format!(
            "feature set after trimming sample {} (no universal dimensions)",
            g.sample_id
        )));
    }
    select_groups(g, &keep, Scheme::Trim)
}

/// Trim to a fixed, dataset-wide group set (see [`dataset_trim_schema`]).
pub fn trim_to_schema(g: &AttributedGraph, target: &FeatureSchema) -> Result<(AttributedGraph, CollationReport)> {
    let schema = g.schema();
    let keep = target
        .groups()
        .iter()
        .map(|t| {
            schema.index_of(&t.name).filter(|&i| schema.groups()[i].width == t.width).ok_or_else(|| {
                Error::Shape(format!("sample {}: no group {:?} of width {}", g.sample_id, t.name, t.width))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Shape("trim schema group order differs from sample schema".into()));
    }
    select_groups(g, &keep, Scheme::Trim)
}

pub fn zero(g: &AttributedGraph) -> (AttributedGraph, CollationReport) {
    let x = &g.features;
    let schema = x.schema().clone();
    let mut out = MaskedMatrix::new(schema.clone(), x.rows());
    for i in 0..x.rows() {
        for (k, grp) in schema.groups().iter().enumerate() {
            match x.group_values(i, k) {
                Some(v) => out.set_group(i, k, v),
                None => out.set_group(i, k, &vec![0.0; grp.width]),
            }
        }
    }
    let report = CollationReport {
        scheme: Scheme::Zero,
        sample_id: g.sample_id.clone(),
        dims_removed: Vec::new(),
        nodes_removed: Vec::new(),
        output_dim: out.cols(),
        id_map: Vec::new(),
    };
    let mut graph =
        AttributedGraph::new(g.sample_id.clone(), g.adjacency.clone(), out).expect("zero preserves node count");
    graph.label = g.label.clone();
    (graph, report)
}

pub fn prune(g: &AttributedGraph) -> Result<(AttributedGraph, CollationReport)> {
    let x = &g.features;
    let (keep, removed): (Vec<usize>, Vec<usize>) = (0..x.rows()).partition(|&i| x.row_complete(i));
    if keep.is_empty() {
        return Err(Error::Empty(format!("graph after pruning sample {} (no complete node)", g.sample_id)));
    }
    let mut out = MaskedMatrix::new(x.schema().clone(), keep.len());
    for (new, &old) in keep.iter().enumerate() {
        for k in 0..x.schema().len() {
            out.set_group(new, k, x.group_values(old, k).expect("complete row"));
        }
    }
    let adjacency = g.adjacency.induced(&keep);
    let report = CollationReport {
        scheme: Scheme::Prune,
        sample_id: g.sample_id.clone(),
        dims_removed: Vec::new(),
        nodes_removed: removed,
        output_dim: out.cols(),
        id_map: keep.iter().enumerate().map(|(new, &old)| (old, new)).collect(),
    };
    let mut graph = AttributedGraph::new(g.sample_id.clone(), adjacency, out)?;
    graph.label = g.label.clone();
    Ok((graph, report))
}

/// Applies a per-sample scheme. Trim here is the per-sample variant.
pub fn collate(g: &AttributedGraph, scheme: Scheme) -> Result<(AttributedGraph, CollationReport)> {
    match scheme {
        Scheme::Trim => trim(g),
        Scheme::Zero => Ok(zero(g)),
        Scheme::Prune => prune(g),
    }
}

/// Intersection over samples of the groups Trim would retain, so every
/// trimmed sample has the same width. Samples are folded in sorted id order.
pub fn dataset_trim_schema<'a>(graphs: impl IntoIterator<Item = &'a AttributedGraph>) -> Result<FeatureSchema> {
    let mut graphs: Vec<&AttributedGraph> = graphs.into_iter().collect();
    graphs.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let first = graphs.first().ok_or_else(|| Error::Empty("corpus for trim schema".into()))?;
    let schema = first.schema().clone();
    let mut keep: BTreeSet<usize> = (0..schema.len()).collect();
    for g in &graphs {
        if g.schema().schema_hash() != schema.schema_hash() {
            return Err(Error::SchemaMismatch {
                expected: schema.schema_hash_hex(),
                found: g.schema().schema_hash_hex(),
            });
        }
        let missing = non_universal_groups(&g.features);
        keep.retain(|k| !missing.contains(k));
    }
    if keep.is_empty() {
        return Err(Error::Empty("intersection of trimmed feature groups".into()));
    }
    Ok(schema.retain_groups(|i| keep.contains(&i)))
}

/// Collates a whole dataset in parallel, preserving order. Trim uses
/// `trim_schema` when given, otherwise [`dataset_trim_schema`] of `graphs`.
pub fn collate_dataset(
    graphs: &[AttributedGraph],
    scheme: Scheme,
    trim_schema: Option<&FeatureSchema>,
) -> Result<(Vec<AttributedGraph>, Vec<CollationReport>)> {
    let target = match (scheme, trim_schema) {
        (Scheme::Trim, Some(s)) => Some(s.clone()),
        (Scheme::Trim, None) => Some(dataset_trim_schema(graphs)?),
        _ => None,
    };
    let out: Vec<(AttributedGraph, CollationReport)> = graphs
        .par_iter()
        .map(|g| match &target {
            Some(t) => trim_to_schema(g, t),
            None => collate(g, scheme),
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}
