use log::warn;
use serde::{Deserialize, Serialize};

use super::softmax_entropy;
use crate::error::{Error, Result};
use crate::gnn::{predict, ModelState};
use crate::train::EVAL_BATCH;
use crate::types::AttributedGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub embedding: Vec<f64>,
    pub entropy: f64,
}

/// Per-class buffers of pseudo-labeled embeddings, each sorted by ascending
/// entropy and capped at `capacity`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    capacity: usize,
    classes: Vec<Vec<SupportEntry>>,
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SupportSet {
    pub fn new(classes: usize, capacity: usize) -> Result<Self> {
        if capacity < 1 {
            return Err(Error::Config("support-set capacity must be >= 1".into()));
        }
        Ok(SupportSet { capacity, classes: vec![Vec::new(); classes] })
    }

    /// One zero-entropy entry per class from the classifier weights; classes
    /// whose weight vector is all zeros start empty.
    pub fn from_classifier(state: &ModelState, capacity: usize) -> Result<Self> {
        let w = state.params.value("classifier.weight")?;
        let mut set = SupportSet::new(state.config.classes, capacity)?;
        for c in 0..state.config.classes {
            let column: Vec<f64> = (0..w.rows()).map(|r| w.row(r)[c]).collect();
            if column.iter().any(|&x| x != 0.0) {
                set.insert(c, column, 0.0)?;
            }
        }
        Ok(set)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn entries(&self, class: usize) -> &[SupportEntry] {
        &self.classes[class]
    }

    /// Inserts after any entries of equal entropy, then evicts the highest
    /// entropies beyond capacity.
    pub fn insert(&mut self, class: usize, embedding: Vec<f64>, entropy: f64) -> Result<()> {
        let list =
            self.classes.get_mut(class).ok_or_else(|| Error::Config(format!("class {class} outside support set")))?;
        let pos = list.partition_point(|e| e.entropy <= entropy);
        list.insert(pos, SupportEntry { embedding, entropy });
        list.truncate(self.capacity);
        Ok(())
    }

    /// Mean support embedding per class; `None` for empty classes.
    pub fn prototypes(&self) -> Vec<Option<Vec<f64>>> {
        self.classes
            .iter()
            .map(|list| {
                let first = list.first()?;
                let mut mean = vec![0.0; first.embedding.len()];
                for e in list {
                    for (m, x) in mean.iter_mut().zip(&e.embedding) {
                        *m += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= list.len() as f64);
                Some(mean)
            })
            .collect()
    }

    /// Cosine scores of `z` against every prototype. Empty classes score
    /// `-inf`; a zero-norm `z` falls back to raw dot products.
    pub fn scores(&self, z: &[f64]) -> Vec<f64> {
        let zhat = normalized(z).unwrap_or_else(|| {
            warn!("zero-norm embedding; scoring with unnormalized dot products");
            z.to_vec()
        });
        self.prototypes()
            .iter()
            .map(|p| match p {
                Some(p) => normalized(p).map_or(0.0, |p| dot(&zhat, &p)),
                None => f64::NEG_INFINITY,
            })
            .collect()
    }

    /// Predicted class and the entropy of its score distribution.
    pub fn classify(&self, z: &[f64]) -> (usize, f64) {
        let scores = self.scores(z);
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        (best, softmax_entropy(&scores))
    }
}

/// Gradient-free online adaptation replacing the classifier head with
/// entropy-filtered class prototypes.
#[derive(Clone, Debug)]
pub struct T3a {
    state: ModelState,
    support: SupportSet,
}

impl T3a {
    pub fn new(state: ModelState, capacity: usize) -> Result<Self> {
        let support = SupportSet::from_classifier(&state, capacity)?;
        Ok(T3a { state, support })
    }

    pub fn with_support(state: ModelState, support: SupportSet) -> Result<Self> {
        if support.num_classes() != state.config.classes {
            return Err(Error::Shape(format!(
                "support set has {} classes, model {}",
                support.num_classes(),
                state.config.classes
            )));
        }
        Ok(T3a { state, support })
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn model(&self) -> &ModelState {
        &self.state
    }

    /// Classifies one embedding with the current prototypes, then adds it to
    /// the support set of its predicted class.
    pub fn step(&mut self, z: Vec<f64>) -> Result<usize> {
        let (pred, entropy) = self.support.classify(&z);
        self.support.insert(pred, z, entropy)?;
        Ok(pred)
    }

    /// Processes graphs in stream order.
    pub fn predict_stream(&mut self, graphs: &[&AttributedGraph]) -> Result<Vec<usize>> {
        if graphs.is_empty() {
            return Ok(Vec::new());
        }
        let emb = predict(&self.state, graphs, EVAL_BATCH)?.embeddings;
        (0..emb.rows()).map(|i| self.step(emb.row(i).to_vec())).collect()
    }

    pub fn into_parts(self) -> (ModelState, SupportSet) {
        (self.state, self.support)
    }
}
