//! Trains the prefix attribute classifier and scores growing prefixes of a
//! few held-out sentences.

use acm::classifier::{train_classifier, ClassifierConfig, ClassifierTrainConfig};
use acm::corpus::{generate_synthetic_corpus, SyntheticConfig};
use acm::numeric::RngState;

fn main() -> acm::Result<()> {
    let rng = RngState::new(5);
    let config = SyntheticConfig {
        clusters: 30,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&config, &rng.split("data"))?;
    let classifier = ClassifierConfig {
        vocab_size: corpus.vocab.len(),
        d_model: 32,
        heads: 2,
        layers: 1,
        ffn_dim: 64,
        max_len: 128,
        ..Default::default()
    };
    let (model, report) = train_classifier(
        &corpus.classifier_prefixes(),
        classifier,
        &ClassifierTrainConfig::default(),
        &rng.split("classifier"),
    )?;
    for (e, l) in report.epoch_losses.iter().enumerate() {
        println!("epoch {e}  loss {l:.4}");
    }
    println!(
        "accuracy train {:.4}  val {:.4}  test {:.4}",
        report.train_accuracy, report.val_accuracy, report.test_accuracy
    );

    for s in corpus.sentences.iter().take(2) {
        println!("\nlabel {}: {}", s.label, corpus.vocab.detokenize(&s.tokens));
        for len in 1..=s.tokens.len() {
            let p = model.score_prefix(&s.tokens[..len])?.prob(s.label);
            println!("  {len:>2} tokens  P(label) {p:.3}");
        }
    }
    Ok(())
}
