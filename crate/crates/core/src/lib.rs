//! Attributed function-call graphs for malware classification under
//! distribution shift.
//!
//! The pipeline runs from per-function analysis records to a trained graph
//! classifier:
//!
//! 1. [`formats`] loads call graphs (edge lists) and function records.
//! 2. [`extract`] turns every function into a node vector of metadata,
//!    optional code embeddings and local degree profile features.
//! 3. [`collate`] resolves missing feature groups by Trim, Zero or Prune.
//! 4. [`gnn`] and [`train`] fit GCN/GIN classifiers on the
//!    [`autodiff`] engine.
//! 5. [`adapt`] adapts a trained model to a shifted target distribution.
//! 6. [`bench`] builds shifted benchmark splits and synthetic corpora.

pub mod adapt;
pub mod autodiff;
pub mod bench;
pub mod collate;
pub mod error;
pub mod extract;
pub mod formats;
pub mod gnn;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Adjacency, AttributedGraph, CorpusIndex, FeatureGroup, FeatureSchema, FunctionRecord, IndexEntry, Label,
    MaskedMatrix,
};
