use log::warn;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::gnn::{predict, ModelState};
use crate::train::{LabeledSet, EVAL_BATCH};
use crate::types::AttributedGraph;

/// k-nearest-neighbor classifier over frozen graph embeddings.
#[derive(Clone, Debug)]
pub struct KnnProbe {
    state: ModelState,
    embeddings: Vec<Vec<f64>>,
    labels: Vec<usize>,
    k: usize,
}

/// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

impl KnnProbe {
    pub fn new(state: ModelState, labeled: &LabeledSet, k: usize) -> Result<Self> {
        if labeled.is_empty() {
            return Err(Error::Empty("labeled set for k-NN".into()));
        }
        let emb = predict(&state, &labeled.refs(), EVAL_BATCH)?.embeddings;
        let rows = (0..emb.rows()).map(|i| emb.row(i).to_vec()).collect();
        KnnProbe::from_embeddings(state, rows, labeled.labels.clone(), k)
    }

    pub fn from_embeddings(state: ModelState, embeddings: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if embeddings.len() != labels.len() || embeddings.is_empty() {
            return Err(Error::Shape(format!("{} embeddings for {} labels", embeddings.len(), labels.len())));
        }
        let k = if k > embeddings.len() {
            warn!("k = {k} exceeds the {} labeled graphs; clamping", embeddings.len());
            embeddings.len()
        } else {
            k
        };
        Ok(KnnProbe { state, embeddings, labels, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn model(&self) -> &ModelState {
        &self.state
    }

    /// Majority vote among the `k` nearest stored embeddings (distance ties
    /// broken by storage order). Among tied classes the one owning the
    /// nearest neighbor wins.
    pub fn classify(&self, z: &[f64]) -> usize {
        let mut order: Vec<(f64, usize)> =
            self.embeddings.iter().enumerate().map(|(i, e)| (cosine_distance(z, e), i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &order[..self.k];
        let classes = self.labels.iter().max().map_or(0, |m| m + 1);
        let mut votes = vec![0usize; classes];
        for &(_, i) in nearest {
            votes[self.labels[i]] += 1;
        }
        let top = *votes.iter().max().expect("k >= 1");
        nearest
            .iter()
            .map(|&(_, i)| self.labels[i])
            .find(|&c| votes[c] == top)
            .expect("a top class exists among neighbors")
    }

    pub fn classify_rows(&self, emb: &Tensor) -> Vec<usize> {
        (0..emb.rows()).map(|i| self.classify(emb.row(i))).collect()
    }

    pub fn predict(&self, graphs: &[&AttributedGraph]) -> Result<Vec<usize>> {
        let emb = predict(&self.state, graphs, EVAL_BATCH)?.embeddings;
        Ok(self.classify_rows(&emb))
    }
}
