use std::sync::Arc;

use crate::autodiff::{SparseMatrix, Tensor};
use crate::error::{Error, Result};
use crate::types::{Adjacency, AttributedGraph};

use super::{Backbone, ModelConfig, Propagation};

/// Neighbor lists without self-loops under the chosen propagation.
fn neighbors(adj: &Adjacency, propagation: Propagation) -> Vec<Vec<u32>> {
    match propagation {
        Propagation::Symmetric => adj.undirected_neighbors(),
        Propagation::Directed => {
            let mut out = vec![Vec::new(); adj.n()];
            for &(s, d) in adj.edges() {
                if s != d {
                    out[s as usize].push(d);
                }
            }
            out
        }
    }
}

/// Triplets of `D̂^{-1/2} Â D̂^{-1/2}` with `Â` = neighbors + I. Row and
/// column degrees coincide in the symmetric case.
pub fn gcn_operator(adj: &Adjacency, propagation: Propagation) -> Vec<(usize, usize, f64)> {
    let nb = neighbors(adj, propagation);
    let n = adj.n();
    let row_deg: Vec<f64> = nb.iter().map(|v| v.len() as f64 + 1.0).collect();
    let mut col_deg = vec![1.0; n];
    for v in &nb {
        for &j in v {
            col_deg[j as usize] += 1.0;
        }
    }
    let mut out = Vec::with_capacity(n + nb.iter().map(Vec::len).sum::<usize>());
    for i in 0..n {
        out.push((i, i, 1.0 / (row_deg[i] * col_deg[i]).sqrt()));
        for &j in &nb[i] {
            let j = j as usize;
            out.push((i, j, 1.0 / (row_deg[i] * col_deg[j]).sqrt()));
        }
    }
    out
}

/// Triplets of the unweighted neighbor-sum operator used by GIN.
pub fn neighbor_operator(adj: &Adjacency, propagation: Propagation) -> Vec<(usize, usize, f64)> {
    neighbors(adj, propagation)
        .into_iter()
        .enumerate()
        .flat_map(|(i, v)| v.into_iter().map(move |j| (i, j as usize, 1.0)))
        .collect()
}

/// Disjoint union of graphs: stacked node features, a block-diagonal
/// propagation operator and per-node graph ids.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub features: Tensor,
    pub operator: Arc<SparseMatrix>,
    pub segments: Vec<usize>,
    pub num_graphs: usize,
}

impl GraphBatch {
    pub fn new(graphs: &[&AttributedGraph], config: &ModelConfig) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Empty("graph batch".into()));
        }
        let d = config.input_dim;
        let total: usize = graphs.iter().map(|g| g.n()).sum();
        let mut features = Vec::with_capacity(total * d);
        let mut triplets = Vec::new();
        let mut segments = Vec::with_capacity(total);
        let mut offset = 0;
        for (k, g) in graphs.iter().enumerate() {
            if g.n() == 0 {
                return Err(Error::Empty(format!("graph {} has no nodes", g.sample_id)));
            }
            if g.features.cols() != d {
                return Err(Error::Width { expected: d, found: g.features.cols() });
            }
            if !g.features.is_fully_present() {
                return Err(Error::Shape(format!(
                    "graph {} has missing feature groups; collate it first",
                    g.sample_id
                )));
            }
            features.extend(g.features.values().iter().map(|&v| v as f64));
            let local = match config.backbone {
                Backbone::Gcn => gcn_operator(&g.adjacency, config.propagation),
                Backbone::Gin => neighbor_operator(&g.adjacency, config.propagation),
            };
            triplets.extend(local.into_iter().map(|(i, j, v)| (i + offset, j + offset, v)));
            segments.extend(std::iter::repeat_n(k, g.n()));
            offset += g.n();
        }
        Ok(GraphBatch {
            features: Tensor::matrix(total, d, features)?,
            operator: Arc::new(SparseMatrix::from_triplets(total, total, triplets)?),
            segments,
            num_graphs: graphs.len(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.segments.len()
    }
}
