//! Adapting a trained classifier to a shifted target distribution.
//!
//! Test-time adaptation uses unlabeled target graphs ([`T3a`], [`Tent`]);
//! domain adaptation uses labeled ones ([`KnnProbe`], [`finetune`]).

mod finetune;
mod knn;
mod t3a;
mod tent;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use finetune::finetune;
pub use knn::KnnProbe;
pub use t3a::{SupportEntry, SupportSet, T3a};
pub use tent::Tent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    T3a,
    Tent,
    Knn,
    Finetune,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::T3a => "t3a",
            Method::Tent => "tent",
            Method::Knn => "knn",
            Method::Finetune => "finetune",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t3a" => Ok(Method::T3a),
            "tent" => Ok(Method::Tent),
            "knn" => Ok(Method::Knn),
            "finetune" => Ok(Method::Finetune),
            other => Err(Error::Config(format!("unknown adaptation method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub method: Method,
    /// Support-set capacity per class.
    pub m: usize,
    pub k: usize,
    pub tent_lr: f64,
    pub tent_steps_per_batch: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub reinit_classifier: bool,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            method: Method::T3a,
            m: 100,
            k: 5,
            tent_lr: 1e-3,
            tent_steps_per_batch: 1,
            finetune_epochs: 30,
            finetune_lr: 1e-3,
            reinit_classifier: false,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.m < 1 {
            v.push("adapt.m must be >= 1".to_string());
        }
        if self.k < 1 {
            v.push("adapt.k must be >= 1".to_string());
        }
        if !(self.tent_lr.is_finite() && self.tent_lr > 0.0) {
            v.push("adapt.tent_lr must be positive".to_string());
        }
        if !(self.finetune_lr.is_finite() && self.finetune_lr > 0.0) {
            v.push("adapt.finetune_lr must be positive".to_string());
        }
        if self.batch_size < 1 {
            v.push("adapt.batch_size must be >= 1".to_string());
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

/// Shannon entropy (nats) of `softmax(scores)`.
pub fn softmax_entropy(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    -exps
        .iter()
        .filter(|&&e| e > 0.0)
        .map(|e| {
            let p = e / z;
            p * p.ln()
        })
        .sum::<f64>()
}
