//! Trains the summarizer on a synthetic corpus and reports teacher-forced
//! accuracy per epoch budget.

use std::time::Instant;

use acm::corpus::{generate_synthetic_corpus, SyntheticConfig};
use acm::numeric::RngState;
use acm::summarizer::{train_summarizer, ConditioningWeights, SummarizerConfig, SummarizerTrainConfig};

fn main() -> acm::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let rng = RngState::new(7);
    let corpus = generate_synthetic_corpus(&SyntheticConfig::default(), &rng.split("data"))?;
    let config = SummarizerConfig {
        vocab_size: corpus.vocab.len(),
        ..Default::default()
    };
    let train = SummarizerTrainConfig {
        epochs,
        ..Default::default()
    };
    let start = Instant::now();
    let (model, report) = train_summarizer(
        &corpus.clusters,
        &[],
        None,
        None,
        ConditioningWeights::none(),
        config,
        &train,
        &rng,
    )?;
    for (e, l) in report.train_losses.iter().enumerate() {
        println!("epoch {e:>3}  loss {l:.4}");
    }
    println!("teacher-forced accuracy {:.4}", report.train_accuracy);
    println!("parameters {}", model.params.num_scalars());
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
