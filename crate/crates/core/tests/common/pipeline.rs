//! Synthetic corpus to labeled, collated datasets.

use std::path::Path;

use fcgshift::bench::{generate_synthetic_corpus, SyntheticConfig};
use fcgshift::collate::{collate_dataset, Scheme};
use fcgshift::extract::{extract_corpus, FeatureConfig};
use fcgshift::train::LabeledSet;
use fcgshift::AttributedGraph;

/// Labels are family indices.
pub fn labeled(graphs: Vec<AttributedGraph>) -> LabeledSet {
    let labels =
        graphs.iter().map(|g| g.label.as_ref().unwrap().family.trim_start_matches("family").parse().unwrap()).collect();
    LabeledSet::new(graphs, labels).unwrap()
}

pub fn corpus_graphs(
    dir: &Path,
    synth: &SyntheticConfig,
    features: &FeatureConfig,
    scheme: Scheme,
) -> Vec<AttributedGraph> {
    let index = generate_synthetic_corpus(synth, dir).unwrap();
    let graphs = extract_corpus(dir, &index, features).unwrap();
    collate_dataset(&graphs, scheme, None).unwrap().0
}

/// Splits into (type00, other types).
pub fn by_type(graphs: Vec<AttributedGraph>) -> (LabeledSet, LabeledSet) {
    let (a, b): (Vec<_>, Vec<_>) = graphs.into_iter().partition(|g| g.label.as_ref().unwrap().type_name == "type00");
    (labeled(a), labeled(b))
}

/// The same graphs under fresh sample ids, so a training set can double as
/// a selection set.
pub fn renamed(set: &LabeledSet, suffix: &str) -> LabeledSet {
    let mut out = set.clone();
    for g in &mut out.graphs {
        g.sample_id.push_str(suffix);
    }
    out
}
