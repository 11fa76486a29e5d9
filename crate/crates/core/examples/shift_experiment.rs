//! Trains on one malware type per family and tests on another, with and
//! without function-level semantic features.

use std::time::Instant;

use fcgshift::bench::{generate_synthetic_corpus, SyntheticConfig};
use fcgshift::collate::{collate_dataset, Scheme};
use fcgshift::extract::{extract_corpus, FeatureConfig};
use fcgshift::gnn::{Backbone, ModelConfig};
use fcgshift::train::{evaluate, stratified_split, train_upstream, LabeledSet, SplitRatios, TrainConfig};
use fcgshift::AttributedGraph;

fn labeled(graphs: Vec<AttributedGraph>) -> LabeledSet {
    let labels =
        graphs.iter().map(|g| g.label.as_ref().unwrap().family.trim_start_matches("family").parse().unwrap()).collect();
    LabeledSet::new(graphs, labels).unwrap()
}

fn main() -> fcgshift::Result<()> {
    let dir = std::env::temp_dir().join("fcgshift-shift-experiment");
    let _ = std::fs::remove_dir_all(&dir);
    let synth = SyntheticConfig { samples_per_type: 40, ..SyntheticConfig::default() };
    let index = generate_synthetic_corpus(&synth, &dir)?;
    for (name, features) in [("ldp", FeatureConfig::ldp_only()), ("meta+ldp", FeatureConfig::default())] {
        let graphs = extract_corpus(&dir, &index, &features)?;
        let (graphs, _) = collate_dataset(&graphs, Scheme::Zero, None)?;
        let (a, b): (Vec<_>, Vec<_>) =
            graphs.into_iter().partition(|g| g.label.as_ref().unwrap().type_name == "type00");
        let source = labeled(a);
        let target = labeled(b);
        let (tr, va, _) = stratified_split(&source.labels, SplitRatios { train: 0.8, val: 0.2, test: 0.0 }, 0)?;
        for seed in 0..3 {
            let t0 = Instant::now();
            let model = ModelConfig::new(Backbone::Gin, source.graphs[0].features.cols(), synth.families);
            let cfg = TrainConfig { epochs: 60, seed, ..TrainConfig::default() };
            let (state, hist) = train_upstream(&source.select(&tr), &source.select(&va), &model, &cfg)?;
            let report = evaluate(&state, &target)?;
            println!(
                "{name} seed {seed}: val {:.3} (epoch {}) target {:.3} in {:.1?}",
                hist.best_val_accuracy,
                hist.best_epoch,
                report.accuracy,
                t0.elapsed()
            );
        }
    }
    Ok(())
}
