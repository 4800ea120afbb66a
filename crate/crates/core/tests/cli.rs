mod support;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acm::decoding::AblationReport;
use acm::experiment::Manifest;

fn acm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acm")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    support::tiny_experiment(&dir.join("run"), 5).save(&path).unwrap();
    path.display().to_string()
}

#[test]
fn unknown_config_key_fails_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n[beam]\nbeam_widht = 3\n").unwrap();
    let out = acm(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("beam_widht"), "{err}");
}

#[test]
fn missing_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = acm(&[
        "summarize",
        "--model",
        dir.path().join("nope.ckpt").to_str().unwrap(),
        "--input",
        dir.path().join("nope.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("s.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    assert_eq!(acm(&["run", "--no-such-flag"]).status.code(), Some(2));
    ok(&acm(&["summarize", "--help"]));
}

#[test]
fn subcommands_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d);
    let p = |name: &str| d.join(name).display().to_string();

    ok(&acm(&["gen-data", "--config", &cfg, "--out", &p("data")]));
    let manifest = Manifest::load(d.join("data/manifest.json")).unwrap();
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.inputs.len(), 1);
    let corpus = p("data/corpus.jsonl");

    ok(&acm(&["train-classifier", "--config", &cfg, "--corpus", &corpus, "--out", &p("clf.ckpt")]));
    let mismatch = acm(&[
        "train-summarizer",
        "--config",
        &cfg,
        "--corpus",
        &corpus,
        "--vocab",
        &p("data/vocab.txt"),
        "--classifier",
        &p("clf.ckpt"),
        "--alpha3",
        "0.01",
        "--out",
        &p("bad.ckpt"),
    ]);
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("vocabulary"));
    assert!(d.join("clf.ckpt.vocab").exists());
    assert!(d.join("clf.ckpt.manifest.json").exists());

    ok(&acm(&[
        "train-summarizer",
        "--config",
        &cfg,
        "--corpus",
        &corpus,
        "--classifier",
        &p("clf.ckpt"),
        "--attribute",
        "1",
        "--alpha2",
        "0.4",
        "--alpha3",
        "0.01",
        "--epochs",
        "2",
        "--out",
        &p("sum.ckpt"),
    ]));

    ok(&acm(&[
        "summarize",
        "--config",
        &cfg,
        "--model",
        &p("sum.ckpt"),
        "--classifier",
        &p("clf.ckpt"),
        "--input",
        &corpus,
        "--beam",
        "2",
        "--alpha1",
        "0.22",
        "--out",
        &p("out.jsonl"),
    ]));
    let lines = fs::read_to_string(d.join("out.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 12);

    let eval = acm(&[
        "evaluate",
        "--candidates",
        &p("out.jsonl"),
        "--references",
        &corpus,
        "--classifier",
        &p("clf.ckpt"),
        "--attribute",
        "1",
        "--out",
        &p("report.json"),
    ]);
    ok(&eval);
    let table = String::from_utf8_lossy(&eval.stdout);
    assert!(table.contains("ROUGE-1"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"], 12);
    assert!(report["consistency"]["mean"].as_f64().is_some());
}

#[test]
fn ablate_reports_requested_variants_plus_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("abl");
    ok(&acm(&[
        "ablate",
        "--config",
        &cfg,
        "--variants",
        "graph-only,training-only,discriminator-only,full",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let report: AblationReport = serde_json::from_str(&fs::read_to_string(out_dir.join("ablation.json")).unwrap()).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["baseline", "graph-only", "training-only", "discriminator-only", "full"]);

    let bad = acm(&["ablate", "--config", &cfg, "--variants", "everything"]);
    assert!(!bad.status.success());
}

#[test]
fn run_twice_gives_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&acm(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]));
    ok(&acm(&["run", "--config", &cfg, "--out", b.to_str().unwrap()]));
    assert_eq!(
        fs::read(a.join("summaries.jsonl")).unwrap(),
        fs::read(b.join("summaries.jsonl")).unwrap()
    );
}
