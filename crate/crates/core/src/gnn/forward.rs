use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{NormMode, NormStats, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::types::AttributedGraph;

use super::{Backbone, GraphBatch, ModelState, NormKind, Readout};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// Batch statistics and active dropout.
    Train { dropout_seed: u64 },
    /// Running statistics, no dropout.
    Eval,
    /// Batch statistics without dropout or running-stat updates.
    TestTimeBatchStats,
}

pub struct ForwardPass {
    /// Tape handles for `state.params`, in storage order.
    pub vars: Vec<Var>,
    /// Pooled graph vectors, `graphs × hidden`.
    pub embeddings: Var,
    /// `graphs × classes`.
    pub logits: Var,
    /// Per-layer batch statistics; empty in eval mode or without norm.
    pub batch_stats: Vec<NormStats>,
}

pub fn model_forward(
    state: &ModelState,
    batch: &GraphBatch,
    mode: ForwardMode,
    tape: &mut Tape,
) -> Result<ForwardPass> {
    let cfg = &state.config;
    if batch.features.cols() != cfg.input_dim {
        return Err(Error::Width { expected: cfg.input_dim, found: batch.features.cols() });
    }
    let vars = state.params.bind(tape);
    let var = |name: &str| -> Result<Var> {
        state
            .params
            .index_of(name)
            .map(|i| vars[i])
            .ok_or_else(|| Error::Config(format!("model is missing tensor {name}")))
    };
    let frozen = match (mode, cfg.norm) {
        (ForwardMode::Eval, NormKind::Batch) => Some(state.running_stats()?),
        _ => None,
    };
    let mut rng = match mode {
        ForwardMode::Train { dropout_seed } => Some(ChaCha8Rng::seed_from_u64(dropout_seed)),
        _ => None,
    };
    let mut batch_stats = Vec::new();
    let mut h = tape.constant(batch.features.clone());
    for i in 0..cfg.layers {
        h = match cfg.backbone {
            Backbone::Gcn => {
                let xw = tape.matmul(h, var(&format!("layers.{i}.lin.weight"))?)?;
                let p = tape.spmm(batch.operator.clone(), xw)?;
                tape.add_broadcast(p, var(&format!("layers.{i}.lin.bias"))?)?
            }
            Backbone::Gin => {
                let own = tape.scale(h, 1.0 + cfg.gin_epsilon);
                let agg = tape.spmm(batch.operator.clone(), h)?;
                let z = tape.add(own, agg)?;
                let z = tape.matmul(z, var(&format!("layers.{i}.mlp0.weight"))?)?;
                let z = tape.add_broadcast(z, var(&format!("layers.{i}.mlp0.bias"))?)?;
                let z = tape.relu(z);
                let z = tape.matmul(z, var(&format!("layers.{i}.mlp1.weight"))?)?;
                tape.add_broadcast(z, var(&format!("layers.{i}.mlp1.bias"))?)?
            }
        };
        if cfg.norm == NormKind::Batch {
            let norm_mode = match &frozen {
                Some(stats) => NormMode::Frozen(stats[i].clone()),
                None => NormMode::Batch,
            };
            let gamma = var(&format!("layers.{i}.norm.weight"))?;
            let beta = var(&format!("layers.{i}.norm.bias"))?;
            let (y, stats) = tape.batch_norm(h, gamma, beta, norm_mode)?;
            batch_stats.extend(stats);
            h = y;
        }
        h = tape.relu(h);
        if let Some(rng) = rng.as_mut() {
            h = tape.dropout(h, cfg.dropout, rng)?;
        }
    }
    let embeddings = match cfg.readout {
        Readout::Max => tape.segment_max(h, &batch.segments, batch.num_graphs)?,
        Readout::Mean => tape.segment_mean(h, &batch.segments, batch.num_graphs)?,
    };
    let z = tape.matmul(embeddings, var("classifier.weight")?)?;
    let logits = tape.add_broadcast(z, var("classifier.bias")?)?;
    Ok(ForwardPass { vars, embeddings, logits, batch_stats })
}

/// Eval-mode outputs for many graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub embeddings: Tensor,
    pub logits: Tensor,
}

impl Prediction {
    pub fn labels(&self) -> Vec<usize> {
        self.logits.argmax_rows()
    }
}

fn stack(parts: Vec<Tensor>, cols: usize) -> Result<Tensor> {
    let rows = parts.iter().map(Tensor::rows).sum();
    let data = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::matrix(rows, cols, data)
}

/// Eval-mode forward over `graphs` in chunks of `batch_size`, evaluated in
/// parallel and reassembled in input order.
pub fn predict(state: &ModelState, graphs: &[&AttributedGraph], batch_size: usize) -> Result<Prediction> {
    if graphs.is_empty() {
        return Err(Error::Empty("no graphs to predict".into()));
    }
    let chunks: Vec<(Tensor, Tensor)> = graphs
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let batch = GraphBatch::new(chunk, &state.config)?;
            let mut tape = Tape::new();
            let out = model_forward(state, &batch, ForwardMode::Eval, &mut tape)?;
            Ok((tape.value(out.embeddings).clone(), tape.value(out.logits).clone()))
        })
        .collect::<Result<_>>()?;
    let (emb, logits): (Vec<_>, Vec<_>) = chunks.into_iter().unzip();
    Ok(Prediction { embeddings: stack(emb, state.config.hidden)?, logits: stack(logits, state.config.classes)? })
}
