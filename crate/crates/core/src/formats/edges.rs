use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Adjacency;

/// Parses "src dst" lines. Blank lines are ignored.
pub fn parse_edges(text: &str, n: usize, path: &Path) -> Result<Adjacency> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse_err =
            |msg: &str| Error::Parse { path: path.to_path_buf(), line: line_no, msg: format!("{msg}: {line:?}") };
        let (Some(src), Some(dst), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err("expected two integers"));
        };
        let src: u64 = src.parse().map_err(|_| parse_err("bad source id"))?;
        let dst: u64 = dst.parse().map_err(|_| parse_err("bad destination id"))?;
        for endpoint in [src, dst] {
            if endpoint >= n as u64 {
                return Err(Error::EdgeBounds { endpoint, n, line: line_no });
            }
        }
        edges.push((src as u32, dst as u32));
    }
    Adjacency::new(n, edges)
}

pub fn read_edges(path: &Path, n: usize) -> Result<Adjacency> {
    let text = fs::read_to_string(path)?;
    parse_edges(&text, n, path)
}

/// Writes the edge list in sorted order, one "src dst" per LF-terminated line.
pub fn write_edges(adj: &Adjacency, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(adj.edges().len() * 8);
    for (s, d) in adj.edges() {
        out.push_str(&format!("{s} {d}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}
