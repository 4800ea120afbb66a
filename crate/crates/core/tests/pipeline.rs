mod support;

use std::fs;

use acm::experiment::{run_pipeline, Manifest, RunLock};

#[test]
fn two_runs_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let a = run_pipeline(&support::tiny_experiment(&root.path().join("a"), 3)).unwrap();
    let b = run_pipeline(&support::tiny_experiment(&root.path().join("b"), 3)).unwrap();
    for name in ["summaries.jsonl", "report.json", "report.txt", "classifier.ckpt", "summarizer.ckpt"] {
        let x = fs::read(a.dir.join(name)).unwrap();
        let y = fs::read(b.dir.join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    let m = Manifest::load(a.dir.join("manifest.json")).unwrap();
    assert_eq!(m.seed, 3);
    assert!(m.outputs.iter().any(|o| o.path == "summaries.jsonl"));
    assert!(!a.dir.join(RunLock::FILE).exists());
}

#[test]
fn different_seed_changes_corpus() {
    let root = tempfile::tempdir().unwrap();
    let mut c = support::tiny_experiment(&root.path().join("a"), 1);
    c.summarizer_train.epochs = 1;
    let a = run_pipeline(&c).unwrap();
    c.seed = 2;
    c.output_dir = root.path().join("b");
    let b = run_pipeline(&c).unwrap();
    assert_ne!(
        fs::read(a.dir.join("corpus.jsonl")).unwrap(),
        fs::read(b.dir.join("corpus.jsonl")).unwrap()
    );
}

#[test]
fn locked_directory_is_refused() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let _lock = RunLock::acquire(&dir).unwrap();
    let err = run_pipeline(&support::tiny_experiment(&dir, 1)).unwrap_err();
    assert!(err.to_string().contains("locked"), "{err}");
}
