//! Statistical properties of the trained classifier and encoder on the
//! synthetic corpus.

use acm::classifier::{train_classifier, ClassifierConfig, ClassifierModel, ClassifierTrainConfig};
use acm::corpus::prefix::expand_all;
use acm::corpus::{generate_synthetic_corpus, LabeledPrefix, SyntheticConfig, SyntheticCorpus};
use acm::numeric::RngState;
use acm::summarizer::{train_summarizer, ConditioningWeights, SummarizerConfig, SummarizerTrainConfig};

fn corpus(clusters: usize, seed: u64) -> SyntheticCorpus {
    let config = SyntheticConfig {
        clusters,
        ..Default::default()
    };
    generate_synthetic_corpus(&config, &RngState::new(seed).split("corpus")).unwrap()
}

fn small_classifier(vocab: usize) -> ClassifierConfig {
    ClassifierConfig {
        vocab_size: vocab,
        d_model: 32,
        heads: 2,
        layers: 1,
        ffn_dim: 64,
        max_len: 128,
        ..Default::default()
    }
}

fn fit(data: &[LabeledPrefix], vocab: usize, seed: u64) -> (ClassifierModel, f64) {
    let (model, report) = train_classifier(
        data,
        small_classifier(vocab),
        &ClassifierTrainConfig::default(),
        &RngState::new(seed),
    )
    .unwrap();
    (model, report.test_accuracy)
}

#[test]
fn label_balance_over_200_clusters() {
    let c = corpus(200, 1);
    let mut counts = [0usize; 2];
    for raw in &c.raw {
        for doc in raw.labels.as_ref().unwrap() {
            for &l in doc {
                counts[l] += 1;
            }
        }
    }
    let total = (counts[0] + counts[1]) as f64;
    for n in counts {
        let share = n as f64 / total;
        assert!((0.4..=0.6).contains(&share), "{counts:?}");
    }
}

#[test]
fn marker_prefixes_and_paragraph_scores() {
    let c = corpus(20, 2);
    let (model, acc) = fit(&c.classifier_prefixes(), c.vocab.len(), 2);
    assert!(acc >= 0.95, "held-out accuracy {acc}");

    for class in 0..2 {
        let markers: Vec<u32> = c.lexicon.adjectives[class]
            .iter()
            .chain(&c.lexicon.verbs[class])
            .map(|w| c.vocab.id(w))
            .collect();
        for len in 1..=markers.len() {
            let p = model.score_prefix(&markers[..len]).unwrap().prob(class);
            assert!(p > 0.9, "class {class} marker prefix of {len}: {p}");
        }
        // Two paragraphs made only of class markers.
        let a: Vec<u32> = markers.iter().copied().cycle().take(12).collect();
        let b: Vec<u32> = markers.iter().rev().copied().cycle().take(9).collect();
        let ba = model.score_prefix(&a).unwrap().prob(class);
        let bb = model.score_prefix(&b).unwrap().prob(class);
        assert!(ba > 0.9 && bb > 0.9);
        assert!(ba * bb > 0.81);
    }

    // Real paragraphs mix markers with topic words; their planted class still
    // wins.
    for (raw, cluster) in c.raw.iter().zip(&c.clusters) {
        let labels: Vec<usize> = raw.labels.as_ref().unwrap().iter().flatten().copied().collect();
        for (i, &l) in labels.iter().enumerate() {
            let p = model.score_paragraph(cluster, i, l).unwrap();
            assert!(p > 0.5, "paragraph {i} class {l}: {p}");
        }
    }
}

#[test]
fn duplicated_data_converges_alike() {
    let c = corpus(12, 3);
    let data = c.classifier_prefixes();
    let doubled: Vec<LabeledPrefix> = data.iter().chain(&data).cloned().collect();
    let mut once = 0.0;
    let mut twice = 0.0;
    for seed in 0..3 {
        once += fit(&data, c.vocab.len(), seed).1 / 3.0;
        twice += fit(&doubled, c.vocab.len(), seed).1 / 3.0;
    }
    assert!((once - twice).abs() <= 0.02, "{once} vs {twice}");
}

#[test]
fn full_sentences_score_at_least_first_tokens() {
    let mut holds = 0;
    for seed in 0..5 {
        let c = corpus(12, 10 + seed);
        let mut sentences = c.sentences.clone();
        RngState::new(seed).shuffle(&mut sentences);
        let cut = sentences.len() * 4 / 5;
        let (train, test) = sentences.split_at(cut);
        let (model, _) = fit(&expand_all(train), c.vocab.len(), seed);
        let first: Vec<LabeledPrefix> = test
            .iter()
            .map(|s| LabeledPrefix {
                tokens: s.tokens[..1].to_vec(),
                label: s.label,
            })
            .collect();
        let full = model.accuracy(test).unwrap();
        let short = model.accuracy(&first).unwrap();
        if full >= short {
            holds += 1;
        }
    }
    assert!(holds >= 4, "held in {holds} of 5 seeds");
}

#[test]
fn trained_encoder_attends_within_class() {
    let c = corpus(30, 4);
    let (classifier, _) = fit(&c.classifier_prefixes(), c.vocab.len(), 4);
    let weights = ConditioningWeights {
        alpha1: 0.0,
        alpha2: 0.4,
        alpha3: 0.0,
    };
    let config = SummarizerConfig {
        vocab_size: c.vocab.len(),
        ..Default::default()
    };
    let train = SummarizerTrainConfig {
        epochs: 10,
        ..Default::default()
    };
    let rng = RngState::new(4);
    let (model, _) =
        train_summarizer(&c.clusters, &[], Some(&classifier), Some(0), weights, config, &train, &rng).unwrap();

    let (mut same, mut same_n, mut cross, mut cross_n) = (0.0, 0.0, 0.0, 0.0);
    for (raw, cluster) in c.raw.iter().zip(&c.clusters) {
        let labels: Vec<usize> = raw.labels.as_ref().unwrap().iter().flatten().copied().collect();
        let input = model.prepare_input(cluster, Some(&classifier)).unwrap();
        let maps = model.attention_maps(&input).unwrap();
        for layer in &maps {
            for head in layer {
                for i in 0..labels.len() {
                    for j in 0..labels.len() {
                        if i == j {
                            continue;
                        }
                        if labels[i] == labels[j] {
                            same += head.at(i, j);
                            same_n += 1.0;
                        } else {
                            cross += head.at(i, j);
                            cross_n += 1.0;
                        }
                    }
                }
            }
        }
    }
    let (same, cross) = (same / same_n, cross / cross_n);
    assert!(same > cross, "same-class {same} vs cross-class {cross}");
}
