//! Ablation over the three conditioning stages on synthetic corpora, one
//! table per seed.
//!
//! `cargo run --release --example ablation -- [seeds]`

use std::time::Instant;

use acm::experiment::{load_corpus, run_ablation, ExperimentConfig, ABLATION_VARIANTS};

fn main() -> acm::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    for seed in 1..=seeds {
        let start = Instant::now();
        let config = ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        };
        let corpus = load_corpus(&config)?;
        let (classifier, creport) = acm::experiment::pipeline::fit_classifier(&config, &corpus)?;
        println!(
            "seed {seed}: classifier held-out accuracy {:.4} ({} prefixes)",
            creport.test_accuracy,
            corpus.prefixes.len()
        );
        let report = run_ablation(&config, &corpus, &classifier, &ABLATION_VARIANTS)?;
        print!("{}", report.to_table());
        println!("elapsed {:.1}s\n", start.elapsed().as_secs_f64());
    }
    Ok(())
}
