mod support;

use acm::classifier::{ClassifierConfig, ClassifierModel};
use acm::corpus::{generate_synthetic_corpus, SyntheticConfig};
use acm::decoding::{beam_search, conditioned_beam_search, BeamConfig, Discriminator, SummarizerStep};
use acm::numeric::tensor::log_softmax;
use acm::numeric::RngState;
use acm::summarizer::{fused_logits, train_summarizer, ConditioningWeights, SummarizerConfig, SummarizerTrainConfig};
use support::ToyScorer;

fn small_config(vocab: usize) -> SummarizerConfig {
    SummarizerConfig {
        vocab_size: vocab,
        d_model: 16,
        heads: 2,
        ffn_dim: 32,
        ..Default::default()
    }
}

#[test]
fn zero_graph_and_training_weights_reproduce_plain_training() {
    let rng = RngState::new(21);
    let c = generate_synthetic_corpus(
        &SyntheticConfig {
            clusters: 6,
            ..Default::default()
        },
        &rng.split("data"),
    )
    .unwrap();
    let train = SummarizerTrainConfig {
        epochs: 3,
        ..Default::default()
    };
    let scorer = ToyScorer { seed: 1 };
    let off = ConditioningWeights {
        alpha1: 0.22,
        alpha2: 0.0,
        alpha3: 0.0,
    };
    let config = small_config(c.vocab.len());
    let (a, ra) = train_summarizer(&c.clusters[..4], &c.clusters[4..], Some(&scorer), Some(0), off, config.clone(), &train, &rng)
        .unwrap();
    let (b, rb) = train_summarizer(
        &c.clusters[..4],
        &c.clusters[4..],
        None,
        None,
        ConditioningWeights::none(),
        config,
        &train,
        &rng,
    )
    .unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&ra.train_losses), bits(&rb.train_losses));
    assert_eq!(bits(&ra.val_losses), bits(&rb.val_losses));
    for ((_, x), (_, y)) in a.params.iter().zip(b.params.iter()) {
        assert_eq!(bits(x.data()), bits(y.data()));
    }
}

#[test]
fn uniform_classifier_leaves_decoder_distribution() {
    let untrained = ClassifierModel::new(
        ClassifierConfig {
            vocab_size: 30,
            d_model: 8,
            heads: 2,
            layers: 1,
            ffn_dim: 8,
            max_len: 16,
            ..Default::default()
        },
        &RngState::new(2),
    )
    .unwrap();
    let mut rng = RngState::new(3);
    for alpha3 in [0.01, 0.5, 3.0] {
        let logits: Vec<f64> = (0..30).map(|_| 2.0 * rng.normal()).collect();
        let fused = fused_logits(&logits, &[1, 7, 9], &untrained, 1, alpha3).unwrap();
        let base = log_softmax(&logits);
        for (f, b) in fused.iter().zip(&base) {
            assert!((f - b).abs() < 1e-12);
        }
    }
    let logits = [0.3, -1.0, 2.0];
    assert_eq!(fused_logits(&logits, &[], &untrained, 0, 0.0).unwrap(), log_softmax(&logits));
}

#[test]
fn zero_alpha_decode_matches_baseline_on_summarizer() {
    let rng = RngState::new(5);
    let c = generate_synthetic_corpus(
        &SyntheticConfig {
            clusters: 3,
            ..Default::default()
        },
        &rng.split("data"),
    )
    .unwrap();
    let train = SummarizerTrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let (model, _) = train_summarizer(
        &c.clusters,
        &[],
        None,
        None,
        ConditioningWeights::none(),
        small_config(c.vocab.len()),
        &train,
        &rng,
    )
    .unwrap();
    let scorer = ToyScorer { seed: 5 };
    let config = BeamConfig {
        alpha1: 0.0,
        max_steps: 10,
        ..Default::default()
    };
    for cluster in &c.clusters {
        let step = SummarizerStep {
            model: &model,
            encoding: model.encode(cluster, None).unwrap(),
        };
        let mut disc = Discriminator::new(&scorer, 0, config.eos).unwrap();
        let a = conditioned_beam_search(&step, Some(&mut disc), &config).unwrap();
        let b = beam_search(&step, &config).unwrap();
        assert_eq!(a.best.tokens, b.best.tokens);
        assert_eq!(a.best.combined.to_bits(), b.best.combined.to_bits());
    }
}
