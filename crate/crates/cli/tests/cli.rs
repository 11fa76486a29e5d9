use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fcgshift"));
    c.env("RUST_LOG", "warn").env_remove("FCGSHIFT_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn fcgshift")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("stderr is empty");
    serde_json::from_str(last).unwrap_or_else(|e| panic!("not JSON ({e}): {stderr}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

fn tree_digest(dir: &Path) -> Vec<(String, String)> {
    WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let h = Sha256::digest(fs::read(e.path()).unwrap());
            (rel, h.iter().map(|b| format!("{b:02x}")).collect())
        })
        .collect()
}

/// 5 families x 2 types x 10 samples.
fn config(dir: &Path) -> PathBuf {
    write(
        &dir.join("config.json"),
        &json!({
            "seed": 7,
            "extract": {"meta": true, "llm": false, "ldp": true},
            "collate": {"scheme": "zero"},
            "model": {"backbone": "gin", "hidden": 32},
            "train": {"epochs": 30, "batch_size": 16},
            "bench": {"families": 5, "types_per_family": 2, "samples_per_type": 10, "min_nodes": 8, "max_nodes": 30, "embedding_dim": 16},
            "io": {"workers": 2}
        }),
    )
}

#[test]
fn end_to_end_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = config(t);
    let (corpus, feats, data, ckpt) = (t.join("corpus"), t.join("feats"), t.join("data"), t.join("ckpt"));

    ok(&["synth", s(&cfg), s(&corpus)]);
    let index: Value = serde_json::from_slice(&fs::read(corpus.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["entries"].as_array().unwrap().len(), 100);

    ok(&["extract", s(&corpus), s(&feats), "--features", "meta,ldp", "--config", s(&cfg)]);
    ok(&["collate", s(&feats), s(&data), "--scheme", "zero"]);
    ok(&["train", s(&data), s(&cfg), s(&ckpt)]);
    let report = t.join("eval").join("report.json");
    ok(&["eval", s(&ckpt), s(&data), "--report", s(&report), "--subset", "test"]);

    let r: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["n_samples"], 20);
    let acc = r["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(r["confusion"].as_array().unwrap().len(), 5);
    assert_eq!(r["class_names"][0], "family00");

    let m: Value = serde_json::from_slice(&fs::read(ckpt.join("run.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["config"]["train"]["seed"], 7);
    assert!(m["inputs"]["data"].is_string() && m["inputs"]["config"].is_string());
    assert!(m["outputs"]["params.bin"].is_string());
    let em: Value = serde_json::from_slice(&fs::read(t.join("eval").join("run.json")).unwrap()).unwrap();
    assert_eq!(em["tags"]["report"], "report.json");

    // Reruns reproduce every artifact byte for byte, inputs untouched.
    let before = tree_digest(&corpus);
    let (data2, ckpt2) = (t.join("data2"), t.join("ckpt2"));
    ok(&["--workers", "3", "extract", s(&corpus), s(&t.join("feats2")), "--features", "meta,ldp", "--config", s(&cfg)]);
    assert_eq!(tree_digest(&feats), tree_digest(&t.join("feats2")));
    ok(&["collate", s(&t.join("feats2")), s(&data2), "--scheme", "zero"]);
    ok(&["train", s(&data2), s(&cfg), s(&ckpt2)]);
    assert_eq!(tree_digest(&data), tree_digest(&data2));
    for f in ["params.bin", "manifest.json", "history.json", "partition.json"] {
        assert_eq!(fs::read(ckpt.join(f)).unwrap(), fs::read(ckpt2.join(f)).unwrap(), "{f}");
    }
    assert_eq!(tree_digest(&corpus), before);
}

#[test]
fn width_mismatch_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = config(t);
    let corpus = t.join("corpus");
    ok(&["synth", s(&cfg), s(&corpus)]);
    ok(&["extract", s(&corpus), s(&t.join("ldp")), "--features", "ldp"]);
    ok(&["extract", s(&corpus), s(&t.join("full")), "--features", "meta,ldp"]);
    ok(&["collate", s(&t.join("full")), s(&t.join("full-z")), "--scheme", "zero"]);
    let mut small = serde_json::from_slice::<Value>(&fs::read(&cfg).unwrap()).unwrap();
    small["train"]["epochs"] = json!(1);
    let small = write(&t.join("small.json"), &small);
    ok(&["train", s(&t.join("ldp")), s(&small), s(&t.join("ckpt"))]);

    let out = run(&["eval", s(&t.join("ckpt")), s(&t.join("full-z"))]);
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "width");
    let msg = e["error"]["message"].as_str().unwrap();
    assert!(msg.contains("width") && msg.contains('5') && msg.contains("941"), "{msg}");
}

#[test]
fn config_errors_list_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        &tmp.path().join("bad.json"),
        &json!({"train": {"epochs": 0, "lr": -1.0}, "adapt": {"k": 0}, "model": {"layers": 0}, "io": {"workers": 0}}),
    );
    let e = error_json(&run(&["synth", s(&cfg), s(&tmp.path().join("out"))]));
    assert_eq!(e["error"]["kind"], "config");
    let v: Vec<&str> = e["error"]["violations"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    assert_eq!(v.len(), 5, "{v:?}");
    assert!(v.iter().any(|m| m.contains("epochs")));
    assert!(v.iter().any(|m| m.contains("lr")));
    assert!(v.iter().any(|m| m.contains("adapt.k")));
    assert!(v.iter().any(|m| m.contains("workers")));
    assert!(!tmp.path().join("out").exists());

    let unknown = write(&tmp.path().join("unknown.json"), &json!({"train": {"epochs": 2, "warmup": 3}}));
    let e = error_json(&run(&["synth", s(&unknown), s(&tmp.path().join("out"))]));
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("warmup"));
}

#[test]
fn missing_inputs_and_bad_env_fail_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let e = error_json(&run(&["collate", s(&tmp.path().join("nope")), s(&tmp.path().join("out"))]));
    assert_eq!(e["error"]["kind"], "io");
    let cfg = config(tmp.path());
    let out =
        bin().args(["synth", s(&cfg), s(&tmp.path().join("c"))]).env("FCGSHIFT_WORKERS", "zero").output().unwrap();
    assert_eq!(error_json(&out)["error"]["kind"], "config");
    let out = bin().args(["synth", s(&cfg), s(&tmp.path().join("c"))]).env("FCGSHIFT_WORKERS", "2").output().unwrap();
    assert!(out.status.success());
}

#[test]
fn output_may_not_overwrite_input() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let corpus = tmp.path().join("corpus");
    ok(&["synth", s(&cfg), s(&corpus)]);
    let e = error_json(&run(&["extract", s(&corpus), s(&corpus.join("feats"))]));
    assert!(e["error"]["message"].as_str().unwrap().contains("overwrite"));
}

#[test]
fn split_and_adapt_report_table() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = config(t);
    let corpus = t.join("corpus");
    ok(&["synth", s(&cfg), s(&corpus)]);

    let table: Vec<Value> =
        (0..5).map(|f| json!({"class_id": f, "family": format!("family{f:02}"), "types": ["type00"]})).collect();
    let spec =
        write(&t.join("spec.json"), &json!({"variant": "tiny", "label_table": table, "per_class": 6, "seed": 1}));
    ok(&["split", s(&corpus), s(&spec), s(&t.join("tiny"))]);
    let tiny: Value = serde_json::from_slice(&fs::read(t.join("tiny/split.json")).unwrap()).unwrap();
    assert_eq!(tiny["classes"].as_array().unwrap().len(), 5);
    assert_eq!(tiny["classes"][0]["sample_ids"].as_array().unwrap().len(), 6);

    // Excluding the tiny split leaves 4 type00 samples per family.
    let e = error_json(&run(&[
        "split",
        s(&corpus),
        s(&spec),
        s(&t.join("again")),
        "--exclude",
        s(&t.join("tiny/split.json")),
    ]));
    assert_eq!(e["error"]["kind"], "insufficient_candidates");

    ok(&["extract", s(&corpus), s(&t.join("data")), "--features", "ldp"]);
    ok(&["train", s(&t.join("data")), s(&cfg), s(&t.join("ckpt"))]);
    let mut runs = Vec::new();
    for method in ["t3a", "knn", "tent", "finetune"] {
        let out = t.join(format!("adapt-{method}"));
        ok(&["adapt", s(&t.join("ckpt")), s(&t.join("data")), "--method", method, "--out", s(&out), "--col", "target"]);
        let r: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(r["n_samples"], 20);
        runs.push(out);
    }
    assert!(t.join("adapt-tent/checkpoint/params.bin").is_file());
    assert!(t.join("adapt-t3a/support.json").is_file());
    let before = fs::read(t.join("ckpt/params.bin")).unwrap();
    let args: Vec<&str> = std::iter::once("report").chain(runs.iter().map(|p| s(p))).collect();
    let table = ok(&args);
    for method in ["t3a", "knn", "tent", "finetune"] {
        assert!(table.lines().any(|l| l.starts_with(method) && l.contains("_{0.0}")), "{table}");
    }
    assert_eq!(fs::read(t.join("ckpt/params.bin")).unwrap(), before);
}

#[test]
fn report_over_three_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let accs = [0.8, 0.9, 0.85];
    for (i, acc) in accs.iter().enumerate() {
        let dir = t.join(format!("run{i}"));
        fs::create_dir_all(&dir).unwrap();
        let n = 20;
        let hits = (acc * n as f64).round() as usize;
        let labels = vec![0usize; n];
        let predicted: Vec<usize> = (0..n).map(|k| usize::from(k >= hits)).collect();
        let preds: Vec<Value> = (0..n)
            .map(|k| json!({"sample_id": format!("s{k}"), "label": labels[k], "predicted": predicted[k]}))
            .collect();
        write(
            &dir.join("seed.json"),
            &json!({"accuracy": acc, "per_class_accuracy": [acc, null], "macro_f1": 0.5,
                    "confusion": [[hits, n - hits], [0, 0]], "n_samples": n, "class_names": ["a", "b"], "predictions": preds}),
        );
        write(
            &dir.join("seed.run.json"),
            &json!({"command": "eval", "version": "0", "config_hash": "", "config": {}, "inputs": {}, "outputs": {},
                    "tags": {"row": "Zero", "col": "Common", "report": "seed.json"}}),
        );
    }
    let out = t.join("table.txt");
    let table = ok(&["report", s(&t.join("run0")), s(&t.join("run1")), s(&t.join("run2")), "--out", s(&out)]);
    // mean 0.85, population std sqrt(1/600) = 0.0408
    assert!(table.contains("85.0_{4.1}"), "{table}");
    assert!(table.lines().next().unwrap().contains("Common"));
    assert_eq!(fs::read_to_string(out).unwrap(), table);
    let e = error_json(&run(&["report", s(&t.join("run0").join("seed.json"))]));
    assert_eq!(e["error"]["kind"], "json");
}
