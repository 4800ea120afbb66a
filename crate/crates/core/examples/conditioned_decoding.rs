//! Beam search on a trained summarizer with the future discriminator at a
//! few strengths; prints each summary and its target-class probability.

use acm::classifier::{train_classifier, ClassifierConfig, ClassifierTrainConfig};
use acm::corpus::{generate_synthetic_corpus, SyntheticConfig};
use acm::decoding::{summarize_cluster, BeamConfig};
use acm::eval::attribute_probability;
use acm::numeric::RngState;
use acm::summarizer::{train_summarizer, ConditioningWeights, SummarizerConfig, SummarizerTrainConfig};

fn main() -> acm::Result<()> {
    let rng = RngState::new(8);
    let corpus = generate_synthetic_corpus(
        &SyntheticConfig {
            clusters: 30,
            ..Default::default()
        },
        &rng.split("data"),
    )?;
    let (classifier, _) = train_classifier(
        &corpus.classifier_prefixes(),
        ClassifierConfig {
            vocab_size: corpus.vocab.len(),
            d_model: 32,
            heads: 2,
            layers: 1,
            ffn_dim: 64,
            max_len: 128,
            ..Default::default()
        },
        &ClassifierTrainConfig::default(),
        &rng.split("classifier"),
    )?;
    let (model, _) = train_summarizer(
        &corpus.clusters[..25],
        &[],
        None,
        None,
        ConditioningWeights::none(),
        SummarizerConfig {
            vocab_size: corpus.vocab.len(),
            ..Default::default()
        },
        &SummarizerTrainConfig {
            epochs: 10,
            ..Default::default()
        },
        &rng.split("summarizer"),
    )?;

    let target = 1;
    for cluster in &corpus.clusters[25..28] {
        println!("reference: {}", corpus.vocab.detokenize(cluster.reference_summary.as_deref().unwrap_or_default()));
        for alpha1 in [0.0, 0.22, 1.0] {
            let config = BeamConfig {
                alpha1,
                ..BeamConfig::default()
            };
            let beam = summarize_cluster(&model, cluster, Some(&classifier), target, &config)?;
            let p = attribute_probability(&classifier, &beam.tokens, target)?;
            println!("  alpha1 {alpha1:<4}  P(class {target}) {p:.3}  {}", corpus.vocab.detokenize(&beam.tokens));
        }
    }
    Ok(())
}
