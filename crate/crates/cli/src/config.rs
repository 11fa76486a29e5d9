use std::fs;
use std::path::Path;

use anyhow::Context;
use fcgshift::adapt::AdaptConfig;
use fcgshift::bench::SyntheticConfig;
use fcgshift::collate::Scheme;
use fcgshift::extract::FeatureConfig;
use fcgshift::gnn::{Backbone, ModelConfig, NormKind, Propagation, Readout};
use fcgshift::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollateSection {
    pub scheme: Scheme,
}

impl Default for CollateSection {
    fn default() -> Self {
        CollateSection { scheme: Scheme::Zero }
    }
}

/// Architecture settings; input width and class count come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub backbone: Backbone,
    pub layers: usize,
    pub hidden: usize,
    pub gin_epsilon: f64,
    pub norm: NormKind,
    pub dropout: f64,
    pub propagation: Propagation,
    pub readout: Readout,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection::from(&ModelConfig::new(Backbone::Gin, 1, 1))
    }
}

impl From<&ModelConfig> for ModelSection {
    fn from(m: &ModelConfig) -> Self {
        ModelSection {
            backbone: m.backbone,
            layers: m.layers,
            hidden: m.hidden,
            gin_epsilon: m.gin_epsilon,
            norm: m.norm,
            dropout: m.dropout,
            propagation: m.propagation,
            readout: m.readout,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, input_dim: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            backbone: self.backbone,
            layers: self.layers,
            hidden: self.hidden,
            input_dim,
            classes,
            gin_epsilon: self.gin_epsilon,
            norm: self.norm,
            dropout: self.dropout,
            propagation: self.propagation,
            readout: self.readout,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Worker threads for parallel stages.
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, overrides the seed of every section.
    pub seed: Option<u64>,
    pub extract: FeatureConfig,
    pub collate: CollateSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub adapt: AdaptConfig,
    pub bench: SyntheticConfig,
    pub io: IoSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    /// Applies the global seed and makes the train section agree with the
    /// extract and collate sections.
    pub fn resolve(mut self) -> Self {
        if let Some(s) = self.seed {
            self.train.seed = s;
            self.adapt.seed = s;
            self.bench.seed = s;
        }
        self.train.feature_config = self.extract.clone();
        self.train.collation = self.collate.scheme;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.extract.validate() {
            v.push(format!("extract: {e}"));
        }
        v.extend(self.model.model_config(1, 2).violations());
        v.extend(self.train.violations());
        v.extend(self.adapt.violations());
        v.extend(self.bench.violations());
        if self.io.workers == Some(0) {
            v.push("io.workers must be >= 1".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::violations(v))
        }
    }
}
