use std::path::Path;
use std::process::{Command, Output};

use lsl::experiment::{read_curves_csv, Manifest};
use lsl::search::SearchResult;
use lsl::simulators::{read_dataset, BitVector};

fn lsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsl"))
        .args(args)
        .env_remove("LSL_WORKERS")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn lsl")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = lsl(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_model_and_sample_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        ok(&["gen-model", "--kind", "urns", "--seed", "5", "--out", s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (da, db) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for p in [&da, &db] {
        ok(&["sample", "--model", s(&a), "--n", "50", "--seed", "1", "--out", s(p)]);
    }
    assert_eq!(std::fs::read(&da).unwrap(), std::fs::read(&db).unwrap());
    assert_eq!(std::fs::read_to_string(&da).unwrap().lines().count(), 50);
}

#[test]
fn search_output_ignores_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("truth.json");
    std::fs::write(&cfg, r#"{"groups": 2}"#).unwrap();
    let model = dir.path().join("m.json");
    let data = dir.path().join("d.jsonl");
    ok(&["gen-model", "--kind", "bits", "--config", s(&cfg), "--seed", "2", "--out", s(&model)]);
    ok(&["sample", "--model", s(&model), "--n", "300", "--seed", "3", "--out", s(&data)]);
    let run = |w: &str| {
        ok(&[
            "search", "--data", s(&data), "--v", "6", "--g", "2", "--s", "3", "--scorer",
            "marginal", "--workers", w,
        ])
    };
    let one = run("1");
    assert_eq!(one, run("8"));
    let result: SearchResult = serde_json::from_slice(&one).unwrap();
    let samples: Vec<BitVector> = read_dataset(&data).unwrap();
    assert!(result.matches(&samples));
    assert_eq!(result.top_k.len(), 10);
    assert!(result.top_k.windows(2).all(|w| w[0].log_score >= w[1].log_score));
}

#[test]
fn estimate_reports_kl_against_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let data = dir.path().join("d.jsonl");
    let est = dir.path().join("est.json");
    ok(&["gen-model", "--kind", "urns", "--out", s(&model)]);
    ok(&["sample", "--model", s(&model), "--n", "400", "--out", s(&data)]);
    let out = lsl(&[
        "estimate", "--case", "ours", "--data", s(&data), "--model", s(&model), "--out", s(&est),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kl = "));
    assert!(est.exists());
}

#[test]
fn experiment_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"kind": "bit_vectors", "n_samples": 60, "n_runs": 2,
            "bits": {"groups": 2}, "checkpoints": [10, 30, 60]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    ok(&["experiment", "--spec", s(&spec), "--out-dir", s(&out_dir)]);
    for f in ["curves.csv", "totals.svg", "search_traces.json", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let records = read_curves_csv(&out_dir.join("curves.csv")).unwrap();
    // six cases, two runs plus the mean
    assert_eq!(records.len(), 18);
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest.n_runs, 2);

    let svg = dir.path().join("replot.svg");
    ok(&["plot", "--csv", s(&out_dir.join("curves.csv")), "--out", s(&svg), "--log-y"]);
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lsl(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(lsl(&["sample", "--n", "3"]).status.code(), Some(2));

    let missing = dir.path().join("nope.json");
    let out = lsl(&["sample", "--model", s(&missing), "--n", "3", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind": "four_urns", "n_sample": 10}"#).unwrap();
    let out = lsl(&["experiment", "--spec", s(&bad), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_sample"));

    let big = dir.path().join("big.json");
    std::fs::write(&big, r#"{"kind": "bit_vectors", "n_samples": 100, "cases": ["c12"]}"#).unwrap();
    let out = lsl(&["experiment", "--spec", s(&big), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("allow-expensive")
        || String::from_utf8_lossy(&out.stderr).contains("allow_expensive"));
}
