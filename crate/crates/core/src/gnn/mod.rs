//! GCN and GIN graph classifiers.
//!
//! Each layer propagates node states over the call graph, normalizes, and
//! applies ReLU. A per-graph readout pools nodes into one vector, which a
//! linear head maps to class logits.

mod batch;
mod checkpoint;
mod forward;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NormStats, ParamSet, Tensor};
use crate::error::{Error, Result};

pub use batch::{gcn_operator, neighbor_operator, GraphBatch};
pub use checkpoint::{load_checkpoint, save_checkpoint, MANIFEST_FILE, PARAMS_FILE};
pub use forward::{model_forward, predict, ForwardMode, ForwardPass, Prediction};

pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Gcn,
    Gin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Batch,
    None,
}

/// How the directed call graph is turned into a propagation operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Propagation {
    Symmetric,
    Directed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Max,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: Backbone,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub input_dim: usize,
    pub classes: usize,
    #[serde(default)]
    pub gin_epsilon: f64,
    #[serde(default = "default_norm")]
    pub norm: NormKind,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_propagation")]
    pub propagation: Propagation,
    #[serde(default = "default_readout")]
    pub readout: Readout,
}

fn default_layers() -> usize {
    3
}
fn default_hidden() -> usize {
    64
}
fn default_norm() -> NormKind {
    NormKind::Batch
}
fn default_propagation() -> Propagation {
    Propagation::Symmetric
}
fn default_readout() -> Readout {
    Readout::Max
}

impl ModelConfig {
    pub fn new(backbone: Backbone, input_dim: usize, classes: usize) -> Self {
        ModelConfig {
            backbone,
            layers: default_layers(),
            hidden: default_hidden(),
            input_dim,
            classes,
            gin_epsilon: 0.0,
            norm: default_norm(),
            dropout: 0.0,
            propagation: default_propagation(),
            readout: default_readout(),
        }
    }

    /// Every violated invariant, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.layers < 1 {
            v.push("model.layers must be >= 1".to_string());
        }
        if self.hidden < 1 {
            v.push("model.hidden must be >= 1".to_string());
        }
        if self.input_dim < 1 {
            v.push("model.input_dim must be >= 1".to_string());
        }
        if self.classes < 2 {
            v.push("model.classes must be >= 2".to_string());
        }
        if !self.gin_epsilon.is_finite() {
            v.push("model.gin_epsilon must be finite".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            v.push("model.dropout must lie in [0, 1)".to_string());
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

    /// `(name, shape, trainable)` for every tensor, in storage order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>, bool)> {
        let mut out = Vec::new();
        let h = self.hidden;
        for i in 0..self.layers {
            let fan_in = if i == 0 { self.input_dim } else { h };
            match self.backbone {
                Backbone::Gcn => {
                    out.push((format!("layers.{i}.lin.weight"), vec![fan_in, h], true));
                    out.push((format!("layers.{i}.lin.bias"), vec![h], true));
                }
                Backbone::Gin => {
                    out.push((format!("layers.{i}.mlp0.weight"), vec![fan_in, h], true));
                    out.push((format!("layers.{i}.mlp0.bias"), vec![h], true));
                    out.push((format!("layers.{i}.mlp1.weight"), vec![h, h], true));
                    out.push((format!("layers.{i}.mlp1.bias"), vec![h], true));
                }
            }
            if self.norm == NormKind::Batch {
                out.push((format!("layers.{i}.norm.weight"), vec![h], true));
                out.push((format!("layers.{i}.norm.bias"), vec![h], true));
                out.push((format!("layers.{i}.norm.running_mean"), vec![h], false));
                out.push((format!("layers.{i}.norm.running_var"), vec![h], false));
            }
        }
        out.push(("classifier.weight".into(), vec![h, self.classes], true));
        out.push(("classifier.bias".into(), vec![self.classes], true));
        out
    }
}

/// Running statistics are stored alongside parameters but never trained.
pub fn is_buffer(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

/// Batch-norm scale and shift.
pub fn is_norm_affine(name: &str) -> bool {
    name.ends_with(".norm.weight") || name.ends_with(".norm.bias")
}

pub fn is_classifier(name: &str) -> bool {
    name.starts_with("classifier.")
}

/// A configured model with its parameters and normalization statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub class_names: Vec<String>,
}

fn init_tensor(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let data = if name.ends_with(".running_var") || name.ends_with(".norm.weight") {
        vec![1.0; len]
    } else if name.ends_with("weight") {
        let bound = 1.0 / (shape[0] as f64).sqrt();
        (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
    } else {
        vec![0.0; len]
    };
    Tensor::new(shape.to_vec(), data).expect("layout shape")
}

/// Seeded fan-in uniform initialization; biases and shifts start at zero.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for (name, shape, trainable) in config.tensor_layout() {
        let t = init_tensor(&name, &shape, &mut rng);
        params.insert(name, t, trainable)?;
    }
    let class_names = (0..config.classes).map(|c| c.to_string()).collect();
    Ok(ModelState { config: config.clone(), params, class_names })
}

impl ModelState {
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.config.classes {
            return Err(Error::Shape(format!("{} class names for {} classes", names.len(), self.config.classes)));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn has_batch_norm(&self) -> bool {
        self.config.norm == NormKind::Batch
    }

    /// Makes every parameter except buffers trainable.
    pub fn train_all(&mut self) {
        self.params.set_trainable(|n| !is_buffer(n));
    }

    /// Freezes everything except batch-norm scale and shift.
    pub fn train_norm_affine_only(&mut self) {
        self.params.set_trainable(is_norm_affine);
    }

    /// Frozen per-layer statistics used in eval mode.
    pub fn running_stats(&self) -> Result<Vec<NormStats>> {
        (0..self.config.layers)
            .map(|i| {
                Ok(NormStats {
                    mean: self.params.value(&format!("layers.{i}.norm.running_mean"))?.data().to_vec(),
                    var: self.params.value(&format!("layers.{i}.norm.running_var"))?.data().to_vec(),
                })
            })
            .collect()
    }

    /// Exponential moving average of batch statistics, momentum [`BN_MOMENTUM`].
    pub fn update_running_stats(&mut self, batch: &[NormStats]) -> Result<()> {
        if !self.has_batch_norm() {
            return Ok(());
        }
        if batch.len() != self.config.layers {
            return Err(Error::Shape(format!("{} stats for {} layers", batch.len(), self.config.layers)));
        }
        for (i, s) in batch.iter().enumerate() {
            for (key, fresh) in [("running_mean", &s.mean), ("running_var", &s.var)] {
                let name = format!("layers.{i}.norm.{key}");
                let old = self.params.value(&name)?;
                let data =
                    old.data().iter().zip(fresh).map(|(o, f)| (1.0 - BN_MOMENTUM) * o + BN_MOMENTUM * f).collect();
                let t = Tensor::new(old.shape().to_vec(), data)?;
                self.params.replace(&name, t)?;
            }
        }
        Ok(())
    }

    /// Fresh classifier head for `classes` outputs, drawn from `seed`.
    pub fn reinit_classifier(&mut self, classes: usize, seed: u64) -> Result<()> {
        let mut config = self.config.clone();
        config.classes = classes;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        self.params.replace("classifier.weight", init_tensor("classifier.weight", &[h, classes], &mut rng))?;
        self.params.replace("classifier.bias", init_tensor("classifier.bias", &[classes], &mut rng))?;
        if classes != self.config.classes {
            self.class_names = (0..classes).map(|c| c.to_string()).collect();
        }
        self.config = config;
        Ok(())
    }

    /// All tensor values as bit patterns, for exact comparisons.
    pub fn fingerprint(&self) -> Vec<(String, Vec<u64>)> {
        self.params.iter().map(|p| (p.name.clone(), p.value.data().iter().map(|v| v.to_bits()).collect())).collect()
    }
}
