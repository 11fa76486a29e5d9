//! Supervised training and evaluation of graph classifiers.

mod report;

use std::collections::BTreeSet;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, sgd_step, AdamConfig, Tape};
use crate::collate::Scheme;
use crate::error::{Error, Result};
use crate::extract::FeatureConfig;
use crate::gnn::{init_model, model_forward, predict, ForwardMode, GraphBatch, ModelConfig, ModelState};
use crate::types::AttributedGraph;

pub use report::{mean_std, AccuracyTable, EvalReport, SamplePrediction};

pub const EVAL_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub collation: Scheme,
    pub feature_config: FeatureConfig,
    /// Stop after this many epochs without a validation improvement.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            collation: Scheme::Zero,
            feature_config: FeatureConfig::default(),
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.epochs < 1 {
            v.push("train.epochs must be >= 1".to_string());
        }
        if self.batch_size < 1 {
            v.push("train.batch_size must be >= 1".to_string());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            v.push("train.lr must be positive".to_string());
        }
        if let Err(e) = self.feature_config.validate() {
            v.push(format!("train.feature_config: {e}"));
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
}

/// Graphs with class indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledSet {
    pub graphs: Vec<AttributedGraph>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(graphs: Vec<AttributedGraph>, labels: Vec<usize>) -> Result<Self> {
        if graphs.len() != labels.len() {
            return Err(Error::Shape(format!("{} graphs with {} labels", graphs.len(), labels.len())));
        }
        Ok(LabeledSet { graphs, labels })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn refs(&self) -> Vec<&AttributedGraph> {
        self.graphs.iter().collect()
    }

    /// Subset by positions, in the given order.
    pub fn select(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            graphs: idx.iter().map(|&i| self.graphs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn check(&self, what: &str, cfg: &ModelConfig) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Empty(format!("{what} split")));
        }
        if let Some(g) = self.graphs.iter().find(|g| g.features.cols() != cfg.input_dim) {
            debug!("{what}: sample {} has width {}", g.sample_id, g.features.cols());
            return Err(Error::Width { expected: cfg.input_dim, found: g.features.cols() });
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= cfg.classes) {
            return Err(Error::Config(format!("{what}: label {y} outside {} classes", cfg.classes)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch of the selected model; 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Shuffled mini-batches for one epoch.
pub fn batch_schedule(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn accuracy(state: &ModelState, set: &LabeledSet) -> Result<f64> {
    let pred = predict(state, &set.refs(), EVAL_BATCH)?.labels();
    let hits = pred.iter().zip(&set.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / set.len() as f64)
}

fn disjoint(train: &LabeledSet, val: &LabeledSet) -> Result<()> {
    let ids: BTreeSet<&str> = train.graphs.iter().map(|g| g.sample_id.as_str()).collect();
    if let Some(g) = val.graphs.iter().find(|g| ids.contains(g.sample_id.as_str())) {
        return Err(Error::Config(format!("sample {} appears in both train and validation", g.sample_id)));
    }
    Ok(())
}

/// Runs the training loop on `state`, keeping the epoch with the best
/// validation accuracy (earliest on ties). Trainable flags are respected.
pub fn fit(
    mut state: ModelState,
    train: &LabeledSet,
    val: &LabeledSet,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<(ModelState, History)> {
    train.check("train", &state.config)?;
    val.check("validation", &state.config)?;
    disjoint(train, val)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = History::default();
    let mut best = state.clone();
    for epoch in 1..=epochs {
        let mut loss_sum = 0.0;
        for idx in batch_schedule(train.len(), cfg.batch_size, &mut rng) {
            let graphs: Vec<&AttributedGraph> = idx.iter().map(|&i| &train.graphs[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let batch = GraphBatch::new(&graphs, &state.config)?;
            let mut tape = Tape::new();
            let out = model_forward(&state, &batch, ForwardMode::Train { dropout_seed: rng.gen() }, &mut tape)?;
            let loss = tape.softmax_cross_entropy(out.logits, &labels)?;
            loss_sum += tape.value(loss).item() * idx.len() as f64;
            let grads = tape.backward(loss)?;
            let grads = state.params.collect_grads(&grads, &out.vars);
            match cfg.optimizer {
                OptimizerKind::Adam => adam_step(&mut state.params, &grads, cfg.lr, AdamConfig::default())?,
                OptimizerKind::Sgd => sgd_step(&mut state.params, &grads, cfg.lr)?,
            }
            state.update_running_stats(&out.batch_stats)?;
        }
        let val_accuracy = accuracy(&state, val)?;
        let train_loss = loss_sum / train.len() as f64;
        debug!("epoch {epoch}: loss {train_loss:.5} val {val_accuracy:.4}");
        history.epochs.push(EpochRecord { epoch, train_loss, val_accuracy });
        if history.best_epoch == 0 || val_accuracy > history.best_val_accuracy {
            history.best_epoch = epoch;
            history.best_val_accuracy = val_accuracy;
            best = state.clone();
        }
        if let Some(p) = cfg.early_stop_patience {
            if epoch - history.best_epoch > p {
                info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    if history.best_epoch == 0 {
        history.best_val_accuracy = accuracy(&best, val)?;
    }
    best.params.reset_state();
    Ok((best, history))
}

/// Trains a fresh model on the source distribution.
pub fn train_upstream(
    train: &LabeledSet,
    val: &LabeledSet,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelState, History)> {
    cfg.validate()?;
    let state = init_model(model_config, cfg.seed)?;
    info!(
        "training {:?} on {} graphs ({} validation), width {}",
        model_config.backbone,
        train.len(),
        val.len(),
        model_config.input_dim
    );
    fit(state, train, val, cfg.epochs, cfg)
}

pub fn evaluate(state: &ModelState, set: &LabeledSet) -> Result<EvalReport> {
    set.check("evaluation", &state.config)?;
    let pred = predict(state, &set.refs(), EVAL_BATCH)?.labels();
    let ids = set.graphs.iter().map(|g| g.sample_id.clone()).collect();
    EvalReport::from_predictions(&set.labels, &pred, state.class_names.clone(), ids)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.7, val: 0.1, test: 0.2 }
    }
}

/// Per-class seeded shuffle; train and test sizes are rounded, validation
/// takes the remainder. Returns sorted
/// `(train, val, test)` positions.
pub fn stratified_split(
    labels: &[usize],
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let total = ratios.train + ratios.val + ratios.test;
    if [ratios.train, ratios.val, ratios.test].iter().any(|r| !(r.is_finite() && *r >= 0.0)) || total <= 0.0 {
        return Err(Error::Config("split ratios must be non-negative with a positive sum".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_train = (n * ratios.train / total).round() as usize;
        let n_test = ((n * ratios.test / total).round() as usize).min(idx.len() - n_train);
        let n_val = idx.len() - n_train - n_test;
        tr.extend_from_slice(&idx[..n_train]);
        va.extend_from_slice(&idx[n_train..n_train + n_val]);
        te.extend_from_slice(&idx[n_train + n_val..]);
    }
    tr.sort_unstable();
    va.sort_unstable();
    te.sort_unstable();
    Ok((tr, va, te))
}
