//! Fixtures and brute-force oracles shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use acm::classifier::{AttributeScore, AttributeScorer};
use acm::corpus::{generate_synthetic_corpus, SimilarityGraph, SyntheticConfig, TokenId};
use acm::decoding::{AttributeMode, StepModel};
use acm::experiment::ExperimentConfig;
use acm::graph_encoder::{conditioned_attention, relation_bias};
use acm::layers::MultiHeadAttention;
use acm::numeric::gradcheck::check_gradients;
use acm::numeric::tensor::log_softmax;
use acm::numeric::{ParamStore, RngState, Tape, Tensor, Var};
use acm::summarizer::{ConditioningWeights, SummarizerConfig, SummarizerModel};
use acm::Result;

fn mix(mut h: u64, x: u64) -> u64 {
    h ^= x.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^ (h >> 31)
}

fn prefix_hash(seed: u64, prefix: &[TokenId]) -> u64 {
    prefix.iter().fold(mix(seed, prefix.len() as u64), |h, &t| mix(h, t as u64 + 1))
}

/// Language model whose next-token distribution is a fixed pseudo-random
/// function of the prefix.
pub struct ToyModel {
    pub seed: u64,
    pub vocab: usize,
}

impl StepModel for ToyModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut rng = RngState::new(prefix_hash(self.seed, prefix));
        let logits: Vec<f64> = (0..self.vocab).map(|_| 1.5 * rng.normal()).collect();
        Ok(log_softmax(&logits))
    }
}

/// Two-class scorer with pseudo-random per-prefix probabilities.
pub struct ToyScorer {
    pub seed: u64,
}

impl AttributeScorer for ToyScorer {
    fn classes(&self) -> usize {
        2
    }

    fn score(&self, tokens: &[TokenId]) -> Result<AttributeScore> {
        let mut rng = RngState::new(prefix_hash(self.seed ^ 0x5555, tokens));
        let p = 0.02 + 0.96 * rng.uniform();
        Ok(AttributeScore::from_probs(vec![p, 1.0 - p]))
    }
}

pub struct UniformScorer(pub usize);

impl AttributeScorer for UniformScorer {
    fn classes(&self) -> usize {
        self.0
    }

    fn score(&self, _: &[TokenId]) -> Result<AttributeScore> {
        Ok(AttributeScore::uniform(self.0))
    }
}

/// Enumerates every sequence of at most `steps` tokens that ends at `eos` or
/// at the cap, scoring
/// `(Σ ln P(y_t|y_<t) + α₁·attr) / |y|^λ`, where `attr` sums
/// `ln P(a | y₁..y_t)` over steps (accumulated) or takes the final prefix
/// only. The discriminator ignores `eos`; an empty prefix scores `ln ½`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force(
    model: &dyn StepModel,
    scorer: Option<&dyn AttributeScorer>,
    attribute: usize,
    alpha1: f64,
    mode: AttributeMode,
    lambda: f64,
    steps: usize,
    eos: TokenId,
) -> (Vec<TokenId>, f64) {
    let attr = |tokens: &[TokenId]| -> f64 {
        let content: Vec<TokenId> = tokens.iter().copied().filter(|&t| t != eos).collect();
        match scorer {
            None => 0.0,
            Some(_) if content.is_empty() => -(2f64).ln(),
            Some(s) => s.score(&content).unwrap().probs[attribute].ln(),
        }
    };
    let mut all: Vec<(Vec<TokenId>, f64)> = Vec::new();
    let mut stack: Vec<(Vec<TokenId>, f64, f64)> = vec![(Vec::new(), 0.0, 0.0)];
    while let Some((tokens, base, acc)) = stack.pop() {
        let lps = model.next_log_probs(&tokens).unwrap();
        for (v, lp) in lps.iter().enumerate() {
            let mut next = tokens.clone();
            next.push(v as TokenId);
            let base = base + lp;
            let s = attr(&next);
            let acc = acc + s;
            let a = match mode {
                AttributeMode::Accumulated => acc,
                AttributeMode::CurrentPrefix => s,
            };
            if v as TokenId == eos || next.len() == steps {
                let score = (base + alpha1 * a) / (next.len() as f64).powf(lambda);
                all.push((next, score));
            } else {
                stack.push((next, base, acc));
            }
        }
    }
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.swap_remove(0)
}

pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a.data()[i * k + p] * b.data()[p * m + j];
            }
            out[i * m + j] = s;
        }
    }
    out
}

pub fn random_tensor(shape: &[usize], rng: &mut RngState) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// A scalar loss over the parameters of a store.
type OpLoss = fn(&ParamStore, &mut Tape) -> Result<Var>;

fn ab(store: &ParamStore, tape: &mut Tape) -> (Var, Var) {
    let ids: Vec<_> = store.ids().collect();
    (tape.param(store, ids[0]), tape.param(store, ids[1]))
}

fn third(store: &ParamStore, tape: &mut Tape) -> Var {
    let id = store.ids().nth(2).expect("third parameter");
    tape.param(store, id)
}

/// Weighted sum so every output entry gets a distinct upstream gradient.
fn weighted(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?;
    let w = tape.constant(w);
    let y = tape.mul(x, w)?;
    tape.sum(y)
}

/// One finite-difference case per differentiable tape op. Each entry holds
/// the op name, the shapes of its parameters and the loss.
pub fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, OpLoss)> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.matmul(a, b)?;
            weighted(t, y)
        }),
        ("transpose", vec![vec![3, 4], vec![4, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let at = t.transpose(a)?;
            let y = t.mul(at, b)?;
            weighted(t, y)
        }),
        ("add", vec![vec![2, 3], vec![2, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.add(a, b)?;
            let y = t.mul(y, y)?;
            weighted(t, y)
        }),
        ("sub", vec![vec![2, 3], vec![2, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.sub(a, b)?;
            let y = t.mul(y, y)?;
            weighted(t, y)
        }),
        ("add_row", vec![vec![3, 4], vec![1, 4]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.add_row(a, b)?;
            let y = t.gelu(y)?;
            weighted(t, y)
        }),
        ("mul", vec![vec![2, 3], vec![2, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.mul(a, b)?;
            weighted(t, y)
        }),
        ("scale", vec![vec![2, 3], vec![2, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.scale(a, -1.7)?;
            let y = t.mul(y, b)?;
            weighted(t, y)
        }),
        ("gelu", vec![vec![3, 3], vec![3, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.gelu(a)?;
            let y = t.mul(y, b)?;
            weighted(t, y)
        }),
        ("softmax-rows", vec![vec![3, 4], vec![3, 4]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.softmax(a, 1)?;
            let y = t.mul(y, b)?;
            weighted(t, y)
        }),
        ("softmax-cols", vec![vec![3, 4], vec![3, 4]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.softmax(a, 0)?;
            let y = t.mul(y, b)?;
            weighted(t, y)
        }),
        ("layer_norm", vec![vec![3, 5], vec![5], vec![5]], |s, t| {
            let (a, g) = ab(s, t);
            let beta = third(s, t);
            let y = t.layer_norm(a, g, beta)?;
            weighted(t, y)
        }),
        ("cross_entropy", vec![vec![3, 5], vec![3, 5]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.mul(a, b)?;
            t.cross_entropy(y, &[4, 0, 2])
        }),
        ("gather", vec![vec![5, 3], vec![4, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let g = t.gather(a, &[4, 1, 1, 0])?;
            let y = t.mul(g, b)?;
            weighted(t, y)
        }),
        ("segment_mean", vec![vec![6, 3], vec![2, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let m = t.segment_mean(a, &[(0, 2), (2, 6)])?;
            let y = t.mul(m, b)?;
            weighted(t, y)
        }),
        ("slice_cols", vec![vec![3, 5], vec![3, 2]], |s, t| {
            let (a, b) = ab(s, t);
            let c = t.slice_cols(a, 2, 2)?;
            let y = t.mul(c, b)?;
            weighted(t, y)
        }),
        ("concat_cols", vec![vec![3, 2], vec![3, 3]], |s, t| {
            let (a, b) = ab(s, t);
            let c = t.concat_cols(&[a, b, a])?;
            let y = t.mul(c, c)?;
            weighted(t, y)
        }),
        ("mean", vec![vec![3, 4], vec![3, 4]], |s, t| {
            let (a, b) = ab(s, t);
            let y = t.mul(a, b)?;
            let y = t.mul(y, a)?;
            t.mean(y)
        }),
    ]
}

/// Runs every op case on random parameters; returns `(name, max rel error)`.
pub fn check_all_ops(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = RngState::new(seed);
    op_cases()
        .into_iter()
        .map(|(name, shapes, loss)| {
            let mut store = ParamStore::new();
            for (i, shape) in shapes.iter().enumerate() {
                store.add(format!("p{i}"), random_tensor(shape, &mut rng));
            }
            let report = check_gradients(&store, 64, loss).unwrap();
            (name, report.max_rel_error())
        })
        .collect()
}

/// Finite-difference check through graph-conditioned attention: query, key,
/// value and output projections plus the input states.
pub fn check_conditioned_attention(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut store = ParamStore::new();
    let attn = MultiHeadAttention::new(&mut store, "attn", 4, 2, &mut rng).unwrap();
    let x = store.add("x", random_tensor(&[3, 4], &mut rng));
    let graph = SimilarityGraph::from_matrix(3, vec![1.0, 0.3, 0.8, 0.3, 1.0, 0.0, 0.8, 0.0, 1.0]).unwrap();
    let relation = relation_bias(&graph, 0.7).unwrap();
    let beta = [0.9, 0.2, 0.6];
    let report = check_gradients(&store, 64, |s, t| {
        let xv = t.param(s, x);
        let trace = conditioned_attention(s, t, &attn, xv, &relation, Some(&beta), 0.4)?;
        weighted(t, trace.output)
    })
    .unwrap();
    report.max_rel_error()
}

/// Finite-difference check of the fused teacher-forcing loss over every
/// summarizer parameter, classifier frozen.
pub fn check_fused_loss(seed: u64) -> f64 {
    let rng = RngState::new(seed);
    let corpus = generate_synthetic_corpus(
        &SyntheticConfig {
            clusters: 1,
            ..Default::default()
        },
        &rng.split("data"),
    )
    .unwrap();
    let config = SummarizerConfig {
        vocab_size: corpus.vocab.len(),
        d_model: 8,
        heads: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        ffn_dim: 8,
        max_summary_tokens: 12,
        ..Default::default()
    };
    let weights = ConditioningWeights {
        alpha1: 0.0,
        alpha2: 0.4,
        alpha3: 0.5,
    };
    let scorer = ToyScorer { seed };
    let model = SummarizerModel::new(config, weights, Some(0), &rng).unwrap();
    let ex = model.training_example(&corpus.clusters[0], Some(&scorer)).unwrap();
    assert!(ex.fusion.is_some());
    let report = check_gradients(&model.params, 6, |s, t| model.example_loss(s, t, &ex)).unwrap();
    report.max_rel_error()
}

/// A run small enough for a test: a dozen clusters, a few epochs.
pub fn tiny_experiment(dir: &std::path::Path, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        seed,
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    };
    c.corpus.synthetic.clusters = 12;
    c.split.val_clusters = 2;
    c.split.test_clusters = 3;
    c.classifier_train.epochs = 1;
    c.summarizer.d_model = 16;
    c.summarizer.heads = 2;
    c.summarizer.ffn_dim = 32;
    c.summarizer_train.epochs = 3;
    c.beam.shortlist_k = 20;
    c.beam.max_steps = 12;
    c
}

/// Frozen reference values, evaluated with 40-digit arithmetic.
pub mod oracle {
    pub const ATTN_DIAG: f64 = 0.7697866270169377;
    pub const ATTN_OFF: f64 = 0.2302133729830623;
    pub const FUSED: [f64; 3] = [-0.19837100675791222, -1.7861576716600311, -4.395595584094131];
    pub const TFIDF_01: f64 = 0.42282774826343633;
    pub const TFIDF_02: f64 = 0.494264987138487;
    pub const SOFTMAX_123: [f64; 3] = [0.09003057317038046, 0.24472847105479764, 0.6652409557748219];
    pub const CE_123_TARGET_1: f64 = 1.4076059644443804;
    pub const GELU_TANH_2: f64 = 1.954597694087775;
}

/// Identity projections, `x = I₂`, `β = [1, 1]`, disjoint paragraphs, `σ = 1`.
pub fn two_paragraph_case(alpha2: f64) -> (Vec<f64>, Vec<f64>) {
    let mut store = ParamStore::new();
    let mut rng = RngState::new(0);
    let attn = MultiHeadAttention::new(&mut store, "attn", 2, 1, &mut rng).unwrap();
    for lin in [&attn.query, &attn.key, &attn.value, &attn.output] {
        *store.get_mut(lin.weight) = Tensor::identity(2);
        *store.get_mut(lin.bias) = Tensor::zeros(&[1, 2]);
    }
    let graph = SimilarityGraph::from_matrix(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let relation = relation_bias(&graph, 1.0).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::identity(2));
    let trace = conditioned_attention(&store, &mut tape, &attn, x, &relation, Some(&[1.0, 1.0]), alpha2).unwrap();
    (
        tape.value(trace.weights[0]).data().to_vec(),
        tape.value(trace.output).data().to_vec(),
    )
}

