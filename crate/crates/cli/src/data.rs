//! Feature datasets on disk: `index.json` plus `samples/<id>/{edges.txt,features.fmx}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fcgshift::bench::Split;
use fcgshift::formats::{read_edges, read_feature_matrix, scan_corpus, write_edges, write_feature_matrix, EDGES_FILE};
use fcgshift::train::LabeledSet;
use fcgshift::{AttributedGraph, CorpusIndex, IndexEntry};
use rayon::prelude::*;

use crate::error::CliError;

pub const INDEX_FILE: &str = "index.json";
pub const FEATURES_FILE: &str = "features.fmx";
pub const SAMPLES_DIR: &str = "samples";

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Reads `index.json` from a file or directory, scanning a raw corpus root
/// when no index file exists.
pub fn load_index(path: &Path) -> anyhow::Result<CorpusIndex> {
    if path.is_file() {
        return read_json(path);
    }
    let file = path.join(INDEX_FILE);
    if file.is_file() {
        return read_json(&file);
    }
    Ok(scan_corpus(path).with_context(|| format!("scanning {}", path.display()))?.index)
}

pub fn write_dataset(out: &Path, graphs: &[AttributedGraph]) -> anyhow::Result<CorpusIndex> {
    let entries: Vec<IndexEntry> = graphs
        .par_iter()
        .map(|g| {
            let label =
                g.label.clone().ok_or_else(|| CliError::new("validation", format!("{} has no label", g.sample_id)))?;
            let rel = PathBuf::from(SAMPLES_DIR).join(&g.sample_id);
            let dir = out.join(&rel);
            fs::create_dir_all(&dir)?;
            write_edges(&g.adjacency, &dir.join(EDGES_FILE))?;
            write_feature_matrix(&g.features, &dir.join(FEATURES_FILE))?;
            Ok(IndexEntry {
                sample_id: g.sample_id.clone(),
                family: label.family,
                type_name: label.type_name,
                node_count: g.n(),
                path: rel,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let index = CorpusIndex::new(entries)?;
    write_json(&out.join(INDEX_FILE), &index)?;
    Ok(index)
}

pub fn read_dataset(dir: &Path) -> anyhow::Result<Vec<AttributedGraph>> {
    let index: CorpusIndex = read_json(&dir.join(INDEX_FILE))?;
    index
        .entries
        .par_iter()
        .map(|e| {
            let sample = dir.join(&e.path);
            let features = read_feature_matrix(&sample.join(FEATURES_FILE), None)
                .with_context(|| format!("sample {}", e.sample_id))?;
            let adjacency = read_edges(&sample.join(EDGES_FILE), e.node_count)?;
            let mut g = AttributedGraph::new(e.sample_id.clone(), adjacency, features)?;
            g.label = Some(e.label());
            Ok(g)
        })
        .collect()
}

/// Class names are the sorted distinct families.
pub fn family_classes(graphs: &[AttributedGraph]) -> Vec<String> {
    let set: BTreeSet<&str> = graphs.iter().filter_map(|g| g.label.as_ref()).map(|l| l.family.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Labels graphs against `classes`. With a split, only its samples are kept
/// and its classes apply; otherwise each graph's family names its class.
pub fn label(graphs: Vec<AttributedGraph>, classes: &[String], split: Option<&Split>) -> anyhow::Result<LabeledSet> {
    let pos: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let by_sample: Option<BTreeMap<&str, &str>> = split.map(|s| {
        s.classes.iter().flat_map(|c| c.sample_ids.iter().map(move |id| (id.as_str(), c.name.as_str()))).collect()
    });
    let mut kept = Vec::new();
    let mut labels = Vec::new();
    for g in graphs {
        let name = match &by_sample {
            Some(m) => match m.get(g.sample_id.as_str()) {
                Some(n) => n.to_string(),
                None => continue,
            },
            None => match &g.label {
                Some(l) => l.family.clone(),
                None => bail!(CliError::new("validation", format!("{} has no label", g.sample_id))),
            },
        };
        let Some(&y) = pos.get(name.as_str()) else {
            bail!(CliError::new(
                "validation",
                format!("sample {} has class {name:?} unknown to the model", g.sample_id)
            ));
        };
        kept.push(g);
        labels.push(y);
    }
    if kept.is_empty() {
        bail!(CliError::new("empty", "no labeled samples"));
    }
    Ok(LabeledSet::new(kept, labels)?)
}

pub fn split_classes(split: &Split) -> Vec<String> {
    split.classes.iter().map(|c| c.name.clone()).collect()
}

/// Width shared by every graph.
pub fn common_width(graphs: &[AttributedGraph]) -> anyhow::Result<usize> {
    let first = graphs.first().ok_or_else(|| CliError::new("empty", "dataset has no samples"))?;
    let w = first.features.cols();
    if let Some(g) = graphs.iter().find(|g| g.features.cols() != w) {
        return Err(fcgshift::Error::Width { expected: w, found: g.features.cols() }.into());
    }
    Ok(w)
}

pub fn dir_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}
