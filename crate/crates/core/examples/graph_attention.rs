//! Paragraph attention of a freshly initialised encoder with and without the
//! attribute term, on one synthetic cluster.

use acm::classifier::{train_classifier, ClassifierConfig, ClassifierTrainConfig};
use acm::corpus::{generate_synthetic_corpus, SyntheticConfig};
use acm::numeric::{RngState, Tensor};
use acm::summarizer::{ConditioningWeights, SummarizerConfig, SummarizerModel};

fn show(label: &str, maps: &[Vec<Tensor>]) {
    println!("{label}");
    let head = &maps[0][0];
    for i in 0..head.shape()[0] {
        let row: Vec<String> = head.row(i).iter().map(|w| format!("{w:.3}")).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> acm::Result<()> {
    let rng = RngState::new(2);
    let corpus = generate_synthetic_corpus(
        &SyntheticConfig {
            clusters: 20,
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

    let cluster = &corpus.clusters[0];
    let labels: Vec<usize> = corpus.raw[0].labels.as_ref().unwrap().iter().flatten().copied().collect();
    println!("paragraph classes {labels:?}");

    let config = SummarizerConfig {
        vocab_size: corpus.vocab.len(),
        ..Default::default()
    };
    for alpha2 in [0.0, 2.0] {
        let weights = ConditioningWeights {
            alpha2,
            ..ConditioningWeights::none()
        };
        let model = SummarizerModel::new(config.clone(), weights, Some(0), &rng.split("model"))?;
        let input = model.prepare_input(cluster, Some(&classifier))?;
        if let Some(beta) = &input.beta {
            let b: Vec<String> = beta.iter().map(|x| format!("{x:.3}")).collect();
            println!("beta for class 0: {}", b.join(" "));
        }
        show(&format!("layer 0 head 0, alpha2 {alpha2}"), &model.attention_maps(&input)?);
    }
    Ok(())
}
