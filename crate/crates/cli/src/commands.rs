use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fcgshift::adapt::{finetune, KnnProbe, Method, T3a, Tent};
use fcgshift::bench::{build_split, generate_synthetic_corpus, Split, SplitSpec};
use fcgshift::collate::{collate_dataset, Scheme};
use fcgshift::extract::{extract_sample, ingest_embeddings, FeatureConfig};
use fcgshift::formats::{load_sample, scan_corpus, EDGES_FILE, EMBEDDINGS_FILE, RECORDS_FILE};
use fcgshift::gnn::{load_checkpoint, predict, save_checkpoint, ModelState};
use fcgshift::train::{
    evaluate, stratified_split, train_upstream, AccuracyTable, EvalReport, LabeledSet, SplitRatios, EVAL_BATCH,
};
use fcgshift::AttributedGraph;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{self, read_json, write_json, INDEX_FILE, SAMPLES_DIR};
use crate::error::CliError;
use crate::manifest::{RunManifest, RUN_FILE};

pub const WORKERS_ENV: &str = "FCGSHIFT_WORKERS";
pub const PARTITION_FILE: &str = "partition.json";
pub const HISTORY_FILE: &str = "history.json";
pub const REPORT_FILE: &str = "report.json";
pub const COLLATION_FILE: &str = "collation.jsonl";
pub const SPLIT_FILE: &str = "split.json";

/// Sets the global thread pool: flag, then config, then the environment.
pub fn init_workers(flag: Option<usize>, config: Option<usize>) -> anyhow::Result<()> {
    let env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::new("config", format!("{WORKERS_ENV}={v:?} is not a positive integer")))?,
        ),
        Err(_) => None,
    };
    if let Some(n) = flag.or(config).or(env) {
        if n == 0 {
            bail!(CliError::new("config", "--workers must be >= 1"));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            warn!("thread pool already initialised; ignoring worker count {n}");
        }
    }
    Ok(())
}

fn prepare(cfg: RunConfig, workers: Option<usize>) -> anyhow::Result<RunConfig> {
    let cfg = cfg.resolve();
    cfg.validate()?;
    init_workers(workers, cfg.io.workers)?;
    info!("resolved config: {}", serde_json::to_string(&cfg)?);
    Ok(cfg)
}

/// Refuses to write into or over an input.
fn check_output(out: &Path, inputs: &[&Path]) -> anyhow::Result<()> {
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let o = abs(out);
    for i in inputs {
        let i = abs(i);
        if o == i || (i.is_dir() && o.starts_with(&i)) {
            bail!(CliError::new("config", format!("output {} would overwrite input {}", out.display(), i.display())));
        }
    }
    Ok(())
}

pub fn extract(
    corpus: &Path,
    out: &Path,
    features: Option<&str>,
    embeddings: Option<&Path>,
    config: Option<&Path>,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load_or_default(config)?;
    if let Some(f) = features {
        let llm_dim = cfg.extract.llm_dim;
        cfg.extract = FeatureConfig { llm_dim, ..f.parse()? };
    }
    let cfg = prepare(cfg, workers)?;
    let mut inputs = vec![corpus];
    inputs.extend(embeddings);
    check_output(out, &inputs)?;
    let scan = scan_corpus(corpus).with_context(|| format!("scanning {}", corpus.display()))?;
    if scan.index.is_empty() {
        bail!(CliError::new("empty", format!("no samples under {}", corpus.display())));
    }
    let fc = &cfg.extract;
    let graphs: Vec<AttributedGraph> = scan
        .index
        .entries
        .par_iter()
        .map(|e| {
            let dir = corpus.join(&e.path);
            let raw = load_sample(&dir.join(EDGES_FILE), &dir.join(RECORDS_FILE))?;
            let emb = match embeddings {
                Some(d) => d.join(format!("{}.emb", e.sample_id)),
                None => dir.join(EMBEDDINGS_FILE),
            };
            let table = if fc.llm && emb.is_file() { Some(ingest_embeddings(&emb, raw.records.len())?) } else { None };
            let mut g = extract_sample(&e.sample_id, &raw, table.as_ref(), fc)
                .with_context(|| format!("sample {}", e.sample_id))?;
            g.label = Some(e.label());
            Ok(g)
        })
        .collect::<anyhow::Result<_>>()?;
    fs::create_dir_all(out)?;
    data::write_dataset(out, &graphs)?;
    let mut m = RunManifest::new("extract", &cfg)?;
    m.input("corpus", corpus)?;
    if let Some(d) = embeddings {
        m.input("embeddings", d)?;
    }
    if let Some(c) = config {
        m.input("config", c)?;
    }
    m.output(INDEX_FILE, &out.join(INDEX_FILE))?;
    m.output(SAMPLES_DIR, &out.join(SAMPLES_DIR))?;
    m.write(&out.join(RUN_FILE))?;
    println!("extracted {} samples ({} skipped), width {}", graphs.len(), scan.skipped, fc.schema()?.dim());
    Ok(())
}

pub fn collate(
    input: &Path,
    out: &Path,
    scheme: Option<Scheme>,
    config: Option<&Path>,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load_or_default(config)?;
    if let Some(s) = scheme {
        cfg.collate.scheme = s;
    }
    let cfg = prepare(cfg, workers)?;
    check_output(out, &[input])?;
    let graphs = data::read_dataset(input)?;
    let (collated, reports) = collate_dataset(&graphs, cfg.collate.scheme, None)?;
    fs::create_dir_all(out)?;
    data::write_dataset(out, &collated)?;
    let mut lines = String::new();
    for r in &reports {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    fs::write(out.join(COLLATION_FILE), lines)?;
    let mut m = RunManifest::new("collate", &cfg)?;
    m.input("data", input)?;
    if let Some(c) = config {
        m.input("config", c)?;
    }
    for f in [INDEX_FILE, SAMPLES_DIR, COLLATION_FILE] {
        m.output(f, &out.join(f))?;
    }
    m.write(&out.join(RUN_FILE))?;
    let width = collated.first().map_or(0, |g| g.features.cols());
    println!("collated {} samples with {}, width {width}", collated.len(), cfg.collate.scheme);
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Exclusion {
    Ids(Vec<String>),
    Split(Split),
}

pub fn split(index: &Path, spec: &Path, out: &Path, exclude: Option<&Path>) -> anyhow::Result<()> {
    let spec_cfg: SplitSpec = read_json(spec)?;
    let v = spec_cfg.violations();
    if !v.is_empty() {
        bail!(CliError::violations(v));
    }
    check_output(out, &[index, spec])?;
    let corpus = data::load_index(index)?;
    let excluded: BTreeSet<String> = match exclude {
        Some(p) => match read_json::<Exclusion>(p)? {
            Exclusion::Ids(ids) => ids.into_iter().collect(),
            Exclusion::Split(s) => s.ids().into_iter().map(str::to_string).collect(),
        },
        None => BTreeSet::new(),
    };
    let result = build_split(&corpus, &spec_cfg, &excluded)?;
    fs::create_dir_all(out)?;
    write_json(&out.join(SPLIT_FILE), &result)?;
    let mut m = RunManifest::new("split", &spec_cfg)?;
    m.input("index", index)?;
    m.input("spec", spec)?;
    if let Some(p) = exclude {
        m.input("exclude", p)?;
    }
    m.output(SPLIT_FILE, &out.join(SPLIT_FILE))?;
    m.write(&out.join(RUN_FILE))?;
    let total: usize = result.classes.iter().map(|c| c.sample_ids.len()).sum();
    println!("split {} classes, {total} samples", result.classes.len());
    Ok(())
}

/// Sample ids of a training run's partition.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

fn ids(set: &LabeledSet) -> Vec<String> {
    set.graphs.iter().map(|g| g.sample_id.clone()).collect()
}

fn read_split(path: Option<&Path>) -> anyhow::Result<Option<Split>> {
    path.map(read_json).transpose()
}

pub fn train(
    data_dir: &Path,
    config: &Path,
    out: &Path,
    split_path: Option<&Path>,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let cfg = prepare(RunConfig::load(config)?, workers)?;
    let mut inputs = vec![data_dir, config];
    inputs.extend(split_path);
    check_output(out, &inputs)?;
    let split = read_split(split_path)?;
    let graphs = data::read_dataset(data_dir)?;
    let classes = match &split {
        Some(s) => data::split_classes(s),
        None => data::family_classes(&graphs),
    };
    let set = data::label(graphs, &classes, split.as_ref())?;
    let width = data::common_width(&set.graphs)?;
    let (tr, va, te) = stratified_split(&set.labels, SplitRatios::default(), cfg.train.seed)?;
    let (train_set, val_set, test_set) = (set.select(&tr), set.select(&va), set.select(&te));
    if val_set.is_empty() {
        bail!(CliError::new("empty", "validation partition is empty; add samples per class"));
    }
    let model = cfg.model.model_config(width, classes.len());
    let (state, history) = train_upstream(&train_set, &val_set, &model, &cfg.train)?;
    let state = state.with_class_names(classes)?;
    save_checkpoint(&state, out)?;
    write_json(&out.join(HISTORY_FILE), &history)?;
    let partition = Partition { train: ids(&train_set), val: ids(&val_set), test: ids(&test_set) };
    write_json(&out.join(PARTITION_FILE), &partition)?;
    let mut m = RunManifest::new("train", &cfg)?;
    m.input("data", data_dir)?;
    m.input("config", config)?;
    if let Some(p) = split_path {
        m.input("split", p)?;
    }
    for f in [fcgshift::gnn::MANIFEST_FILE, fcgshift::gnn::PARAMS_FILE, HISTORY_FILE, PARTITION_FILE] {
        m.output(f, &out.join(f))?;
    }
    m.write(&out.join(RUN_FILE))?;
    println!(
        "trained on {} samples; best epoch {} with validation accuracy {:.4}",
        train_set.len(),
        history.best_epoch,
        history.best_val_accuracy
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    All,
    Train,
    Val,
    Test,
}

fn restrict(set: LabeledSet, keep: &[String]) -> LabeledSet {
    let keep: BTreeSet<&str> = keep.iter().map(String::as_str).collect();
    let idx: Vec<usize> = (0..set.len()).filter(|&i| keep.contains(set.graphs[i].sample_id.as_str())).collect();
    set.select(&idx)
}

/// Writes `report` plus its manifest as `<stem>.run.json` beside it.
fn write_report(path: &Path, report: &EvalReport, mut m: RunManifest) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_json(path, report)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| REPORT_FILE.into());
    m.output(&name, path)?;
    m.tag("report", name.clone());
    let stem = name.strip_suffix(".json").unwrap_or(&name);
    let manifest =
        if stem == "report" { path.with_file_name(RUN_FILE) } else { path.with_file_name(format!("{stem}.run.json")) };
    m.write(&manifest)
}

pub struct EvalArgs<'a> {
    pub ckpt: &'a Path,
    pub data: &'a Path,
    pub report: Option<&'a Path>,
    pub subset: Subset,
    pub split: Option<&'a Path>,
    pub row: Option<String>,
    pub col: Option<String>,
}

pub fn eval(a: EvalArgs<'_>) -> anyhow::Result<()> {
    if let Some(r) = a.report {
        check_output(r, &[a.ckpt, a.data])?;
    }
    let state = load_checkpoint(a.ckpt).with_context(|| format!("loading checkpoint {}", a.ckpt.display()))?;
    let split = read_split(a.split)?;
    let set = data::label(data::read_dataset(a.data)?, &state.class_names, split.as_ref())?;
    let set = match a.subset {
        Subset::All => set,
        s => {
            let p: Partition = read_json(&a.ckpt.join(PARTITION_FILE))?;
            let keep = match s {
                Subset::Train => p.train,
                Subset::Val => p.val,
                _ => p.test,
            };
            restrict(set, &keep)
        }
    };
    if set.is_empty() {
        bail!(CliError::new("empty", "no samples selected for evaluation"));
    }
    let report = evaluate(&state, &set)?;
    match a.report {
        Some(path) => {
            let args = serde_json::json!({ "subset": format!("{:?}", a.subset).to_lowercase() });
            let mut m = RunManifest::new("eval", &args)?;
            m.input("checkpoint", a.ckpt)?;
            m.input("data", a.data)?;
            if let Some(p) = a.split {
                m.input("split", p)?;
            }
            m.tag("row", a.row.unwrap_or_else(|| data::dir_name(a.ckpt)));
            m.tag("col", a.col.unwrap_or_else(|| data::dir_name(a.data)));
            write_report(path, &report, m)?;
            println!(
                "accuracy {:.4} macro-F1 {:.4} over {} samples",
                report.accuracy, report.macro_f1, report.n_samples
            );
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

pub struct AdaptArgs<'a> {
    pub ckpt: &'a Path,
    pub data: &'a Path,
    pub method: Option<Method>,
    pub config: Option<&'a Path>,
    pub out: &'a Path,
    pub split: Option<&'a Path>,
    pub row: Option<String>,
    pub col: Option<String>,
    pub workers: Option<usize>,
}

/// Target data is split 60/20/20. Supervised methods learn from the first
/// two parts; every method is scored on the last, streamed in index order.
pub fn adapt(a: AdaptArgs<'_>) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config)?;
    if let Some(m) = a.method {
        cfg.adapt.method = m;
    }
    let cfg = prepare(cfg, a.workers)?;
    let mut inputs = vec![a.ckpt, a.data];
    inputs.extend(a.config);
    inputs.extend(a.split);
    check_output(a.out, &inputs)?;
    let ac = &cfg.adapt;
    let state = load_checkpoint(a.ckpt).with_context(|| format!("loading checkpoint {}", a.ckpt.display()))?;
    let split = read_split(a.split)?;
    let graphs = data::read_dataset(a.data)?;
    let target_classes = || match &split {
        Some(s) => data::split_classes(s),
        None => data::family_classes(&graphs),
    };
    let classes = match ac.method {
        Method::Knn => target_classes(),
        Method::Finetune if ac.reinit_classifier => target_classes(),
        _ => state.class_names.clone(),
    };
    let set = data::label(graphs, &classes, split.as_ref())?;
    let ratios = SplitRatios { train: 0.6, val: 0.2, test: 0.2 };
    let (tr, va, te) = stratified_split(&set.labels, ratios, ac.seed)?;
    let test = set.select(&te);
    if test.is_empty() {
        bail!(CliError::new("empty", "target test partition is empty"));
    }
    fs::create_dir_all(a.out)?;
    let mut m = RunManifest::new("adapt", &cfg)?;
    let refs = test.refs();
    let predictions = match ac.method {
        Method::T3a => {
            let mut t = T3a::new(state, ac.m)?;
            let p = t.predict_stream(&refs)?;
            write_json(&a.out.join("support.json"), t.support())?;
            m.output("support.json", &a.out.join("support.json"))?;
            p
        }
        Method::Tent => {
            let mut t = Tent::new(state, ac.tent_lr, ac.tent_steps_per_batch)?;
            let mut p = Vec::with_capacity(refs.len());
            for chunk in refs.chunks(ac.batch_size) {
                p.extend(t.adapt_batch(chunk)?);
            }
            save_adapted(&t.into_state(), a.out, &mut m)?;
            p
        }
        Method::Knn => KnnProbe::new(state, &set.select(&tr), ac.k)?.predict(&refs)?,
        Method::Finetune => {
            let (s, history) = finetune(&state, &set.select(&tr), &set.select(&va), classes.len(), ac)?;
            let s = s.with_class_names(classes.clone())?;
            write_json(&a.out.join(HISTORY_FILE), &history)?;
            m.output(HISTORY_FILE, &a.out.join(HISTORY_FILE))?;
            let p = predict(&s, &refs, EVAL_BATCH)?.labels();
            save_adapted(&s, a.out, &mut m)?;
            p
        }
    };
    let report = EvalReport::from_predictions(&test.labels, &predictions, classes, ids(&test))?;
    m.input("checkpoint", a.ckpt)?;
    m.input("data", a.data)?;
    if let Some(c) = a.config {
        m.input("config", c)?;
    }
    if let Some(p) = a.split {
        m.input("split", p)?;
    }
    m.tag("method", ac.method.to_string());
    m.tag("row", a.row.unwrap_or_else(|| ac.method.to_string()));
    m.tag("col", a.col.unwrap_or_else(|| data::dir_name(a.data)));
    write_report(&a.out.join(REPORT_FILE), &report, m)?;
    println!("{}: accuracy {:.4} on {} target samples", ac.method, report.accuracy, report.n_samples);
    Ok(())
}

fn save_adapted(state: &ModelState, out: &Path, m: &mut RunManifest) -> anyhow::Result<()> {
    let dir = out.join("checkpoint");
    save_checkpoint(state, &dir)?;
    m.output("checkpoint", &dir)
}

pub fn synth(config: &Path, out: &Path, workers: Option<usize>) -> anyhow::Result<()> {
    let cfg = prepare(RunConfig::load(config)?, workers)?;
    check_output(out, &[config])?;
    fs::create_dir_all(out)?;
    let index = generate_synthetic_corpus(&cfg.bench, out)?;
    write_json(&out.join(INDEX_FILE), &index)?;
    let mut m = RunManifest::new("synth", &cfg)?;
    m.input("config", config)?;
    m.output("corpus", out)?;
    m.write(&out.join(RUN_FILE))?;
    println!("generated {} samples in {}", index.len(), out.display());
    Ok(())
}

/// Manifests named `run.json` or `*.run.json` directly inside `path`, or
/// `path` itself when it is a file.
fn manifests_in(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n == RUN_FILE || n.ends_with(".run.json"))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Builds the accuracy table over every eval or adapt run found.
pub fn report_table(paths: &[PathBuf]) -> anyhow::Result<AccuracyTable> {
    let mut table = AccuracyTable::new();
    let mut runs = 0;
    for p in paths {
        for file in manifests_in(p)? {
            let m = RunManifest::read(&file)?;
            let (Some(row), Some(col), Some(name)) = (m.tags.get("row"), m.tags.get("col"), m.tags.get("report"))
            else {
                continue;
            };
            let r: EvalReport = read_json(&file.with_file_name(name))?;
            table.add(row, col, r.accuracy);
            runs += 1;
        }
    }
    if runs == 0 {
        bail!(CliError::new("empty", "no evaluation runs found"));
    }
    Ok(table)
}

pub fn report(paths: &[PathBuf], out: Option<&Path>) -> anyhow::Result<()> {
    let rendered = report_table(paths)?.render();
    if let Some(o) = out {
        fs::write(o, &rendered).with_context(|| format!("writing {}", o.display()))?;
    }
    print!("{rendered}");
    Ok(())
}
