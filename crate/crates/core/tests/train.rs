mod common;

use fcgshift::bench::SyntheticConfig;
use fcgshift::collate::Scheme;
use fcgshift::extract::FeatureConfig;
use fcgshift::gnn::{init_model, Backbone, ModelConfig};
use fcgshift::train::{
    accuracy, evaluate, fit, mean_std, stratified_split, train_upstream, AccuracyTable, EvalReport, LabeledSet,
    SplitRatios, TrainConfig,
};
use fcgshift::Error;
use proptest::prelude::*;

use common::pipeline::{corpus_graphs, labeled, renamed};

fn small_set() -> LabeledSet {
    let dir = tempfile::tempdir().unwrap();
    let synth = SyntheticConfig { families: 3, samples_per_type: 5, min_nodes: 6, max_nodes: 15, ..Default::default() };
    labeled(corpus_graphs(dir.path(), &synth, &FeatureConfig::default(), Scheme::Zero))
}

#[test]
fn training_fits_small_set_and_is_deterministic() {
    let data = small_set();
    let val = renamed(&data, "-v");
    let mut model = ModelConfig::new(Backbone::Gcn, data.graphs[0].features.cols(), 3);
    model.hidden = 32;
    let cfg = TrainConfig { epochs: 40, batch_size: 8, seed: 3, ..TrainConfig::default() };
    let (a, ha) = train_upstream(&data, &val, &model, &cfg).unwrap();
    let (b, hb) = train_upstream(&data, &val, &model, &cfg).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert_eq!(ha, hb);
    assert_eq!(ha.epochs.len(), 40);
    assert!(accuracy(&a, &data).unwrap() >= 0.9);
    let best = ha.epochs.iter().map(|e| e.val_accuracy).fold(0.0, f64::max);
    assert_eq!(ha.best_val_accuracy, best);
    assert_eq!(ha.epochs[ha.best_epoch - 1].val_accuracy, best);
    assert!(ha.epochs[..ha.best_epoch - 1].iter().all(|e| e.val_accuracy < best));
}

#[test]
fn different_seeds_differ() {
    let data = small_set();
    let val = renamed(&data, "-v");
    let model = ModelConfig::new(Backbone::Gin, data.graphs[0].features.cols(), 3);
    let run = |seed| {
        train_upstream(&data, &val, &model, &TrainConfig { epochs: 2, seed, ..TrainConfig::default() }).unwrap().0
    };
    assert_ne!(run(0).fingerprint(), run(1).fingerprint());
}

#[test]
fn zero_epochs_and_bad_inputs() {
    let data = small_set();
    let val = renamed(&data, "-v");
    let state = init_model(&ModelConfig::new(Backbone::Gin, data.graphs[0].features.cols(), 3), 0).unwrap();
    let (same, h) = fit(state.clone(), &data, &val, 0, &TrainConfig::default()).unwrap();
    assert_eq!(same, state);
    assert_eq!(h.best_epoch, 0);
    assert!(fit(state.clone(), &data, &data, 1, &TrainConfig::default()).is_err());
    let wrong = init_model(&ModelConfig::new(Backbone::Gin, 7, 3), 0).unwrap();
    assert!(matches!(fit(wrong, &data, &val, 1, &TrainConfig::default()), Err(Error::Width { expected: 7, .. })));
    let narrow = init_model(&ModelConfig::new(Backbone::Gin, data.graphs[0].features.cols(), 2), 0).unwrap();
    assert!(fit(narrow, &data, &val, 1, &TrainConfig::default()).is_err());
}

#[test]
fn constant_predictor_on_uniform_labels() {
    let labels: Vec<usize> = (0..100).map(|i| i % 5).collect();
    let pred = vec![0; 100];
    let names = (0..5).map(|c| c.to_string()).collect();
    let ids = (0..100).map(|i| format!("s{i}")).collect();
    let r = EvalReport::from_predictions(&labels, &pred, names, ids).unwrap();
    assert!((r.accuracy - 0.2).abs() < 1e-12);
    assert_eq!(r.confusion[3][0], 20);
    assert_eq!(r.per_class_accuracy[0], Some(1.0));
    assert_eq!(r.per_class_accuracy[1], Some(0.0));
    // class 0: precision 0.2, recall 1 -> F1 1/3; all others 0
    assert!((r.macro_f1 - (1.0 / 3.0) / 5.0).abs() < 1e-12);
}

#[test]
fn evaluate_matches_accuracy() {
    let data = small_set();
    let state = init_model(&ModelConfig::new(Backbone::Gcn, data.graphs[0].features.cols(), 3), 4).unwrap();
    let r = evaluate(&state, &data).unwrap();
    assert_eq!(r.accuracy, accuracy(&state, &data).unwrap());
    assert_eq!(r.n_samples, data.len());
    let json = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
}

#[test]
fn accuracy_table_cells() {
    let mut t = AccuracyTable::new();
    for a in [0.8, 0.9, 0.85] {
        t.add("Zero", "Common", a);
    }
    let (m, s) = t.cell("Zero", "Common").unwrap();
    let (mo, so) = mean_std(&[0.8, 0.9, 0.85]);
    assert!((m - mo).abs() < 1e-12 && (s - so).abs() < 1e-12);
    assert!((so - (1.0f64 / 600.0).sqrt()).abs() < 1e-12);
    assert!(t.render().contains("85.0_{4.1}"));
}

#[test]
fn config_rejects_unknown_fields() {
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3, "lr_decay": 0.1}"#).is_err());
    let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
    assert_eq!(cfg.batch_size, 32);
    let bad = TrainConfig { epochs: 0, batch_size: 0, lr: -1.0, ..TrainConfig::default() };
    assert_eq!(bad.violations().len(), 3);
}

proptest! {
    #[test]
    fn stratified_split_partitions(labels in prop::collection::vec(0usize..4, 1..200), seed in any::<u64>()) {
        let (tr, va, te) = stratified_split(&labels, SplitRatios::default(), seed).unwrap();
        let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for c in 0..4 {
            let n = labels.iter().filter(|&&y| y == c).count() as f64;
            let k = tr.iter().filter(|&&i| labels[i] == c).count() as f64;
            prop_assert!((k - 0.7 * n).abs() <= 0.5 + 1e-9);
        }
        prop_assert_eq!(stratified_split(&labels, SplitRatios::default(), seed).unwrap(), (tr, va, te));
    }
}
