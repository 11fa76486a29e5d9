use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::formats::{parse_edges, read_records};
use crate::types::{Adjacency, CorpusIndex, FunctionRecord, IndexEntry};

pub const EDGES_FILE: &str = "edges.txt";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.emb";

/// A loaded sample before feature extraction: topology plus raw records.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSample {
    pub adjacency: Adjacency,
    pub records: Vec<FunctionRecord>,
}

/// Loads one sample. The node count is the number of record lines.
pub fn load_sample(edges_path: &Path, records_path: &Path) -> Result<RawSample> {
    let records = read_records(records_path)?;
    let text = fs::read_to_string(edges_path)?;
    let adjacency = parse_edges(&text, records.len(), edges_path)?;
    Ok(RawSample { adjacency, records })
}

#[derive(Debug, Default)]
pub struct ScanResult {
    pub index: CorpusIndex,
    pub skipped: usize,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> =
        fs::read_dir(dir)?.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    out.sort();
    Ok(out)
}

fn count_lines(path: &Path) -> std::io::Result<usize> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).count())
}

fn name_of(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Walks `root/<family>/<type>/<sample_id>/`; entry paths are relative to
/// `root`. Samples lacking either file,
/// or with no records, are skipped with a warning.
pub fn scan_corpus(root: &Path) -> Result<ScanResult> {
    let mut entries = Vec::new();
    let mut skipped = 0;
    for family_dir in sorted_subdirs(root)? {
        for type_dir in sorted_subdirs(&family_dir)? {
            for sample_dir in sorted_subdirs(&type_dir)? {
                let edges = sample_dir.join(EDGES_FILE);
                let records = sample_dir.join(RECORDS_FILE);
                if !edges.is_file() {
                    warn!("skipping {}: missing {EDGES_FILE}", sample_dir.display());
                    skipped += 1;
                    continue;
                }
                let node_count = match count_lines(&records) {
                    Ok(0) => {
                        warn!("skipping {}: no records", sample_dir.display());
                        skipped += 1;
                        continue;
                    }
                    Ok(n) => n,
                    Err(e) => {
                        warn!("skipping {}: {RECORDS_FILE}: {e}", sample_dir.display());
                        skipped += 1;
                        continue;
                    }
                };
                entries.push(IndexEntry {
                    sample_id: name_of(&sample_dir),
                    family: name_of(&family_dir),
                    type_name: name_of(&type_dir),
                    node_count,
                    path: sample_dir.strip_prefix(root).unwrap_or(&sample_dir).to_path_buf(),
                });
            }
        }
    }
    let index = CorpusIndex::new(entries).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", root.display())),
        other => other,
    })?;
    Ok(ScanResult { index, skipped })
}
