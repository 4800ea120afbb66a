//! Encoder-decoder summarizer with conditional training.
//!
//! The graph encoder turns a cluster into paragraph states; a causal decoder
//! with cross-attention over those states predicts the summary. Input and
//! output embeddings are tied. During conditional training the decoder
//! distribution is fused with the frozen classifier's prefix score before the
//! cross-entropy is taken.

use serde::{Deserialize, Serialize};

use crate::classifier::{attribute_log_prob, AttributeScorer};
use crate::corpus::{DocumentCluster, TokenId, BOS, EOS};
use crate::error::{AcmError, Result};
use crate::graph_encoder::{EncoderConfig, EncoderInput, GraphEncoder};
use crate::layers::{causal_mask, DecoderBlock};
use crate::numeric::tensor::log_softmax;
use crate::numeric::{Adam, AdamConfig, Checkpoint, ParamId, ParamStore, RngState, Tape, Tensor, Var};

const CHECKPOINT_KIND: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummarizerConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ffn_dim: usize,
    pub sigma: f64,
    pub max_input_tokens: usize,
    /// Decoder positions, BOS included.
    pub max_summary_tokens: usize,
    pub max_paragraphs: usize,
    /// Decoder candidates per position that receive the classifier term in
    /// conditional training (the gold token always does).
    pub fusion_top_k: usize,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            d_model: 64,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ffn_dim: 128,
            sigma: 1.0,
            max_input_tokens: 512,
            max_summary_tokens: 64,
            max_paragraphs: 64,
            fusion_top_k: 50,
        }
    }
}

/// Weights of the three conditioning stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditioningWeights {
    /// Future discriminator weight used at decode time.
    pub alpha1: f64,
    /// Graph conditional weighting in the encoder.
    pub alpha2: f64,
    /// Conditional training fusion weight.
    pub alpha3: f64,
}

impl Default for ConditioningWeights {
    fn default() -> Self {
        Self {
            alpha1: 0.22,
            alpha2: 0.4,
            alpha3: 0.01,
        }
    }
}

impl ConditioningWeights {
    pub fn none() -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 0.0,
            alpha3: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("alpha3", self.alpha3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(AcmError::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }

    /// Whether training or encoding needs the classifier.
    pub fn needs_classifier(&self) -> bool {
        self.alpha2 != 0.0 || self.alpha3 != 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummarizerTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Clusters per optimizer step.
    pub grad_accum: usize,
}

impl Default for SummarizerTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            lr: 2e-3,
            grad_accum: 4,
        }
    }
}

/// Renormalized `log_softmax(z) + α₃·attr`, where `attr[v]` is the
/// classifier log-probability of the prefix extended by `v`.
pub fn fuse_log_probs(decoder_logits: &[f64], attr_log_probs: &[f64], alpha3: f64) -> Result<Vec<f64>> {
    if decoder_logits.len() != attr_log_probs.len() {
        return Err(AcmError::Dimension(format!(
            "{} decoder logits with {} attribute scores",
            decoder_logits.len(),
            attr_log_probs.len()
        )));
    }
    if !(alpha3 >= 0.0) {
        return Err(AcmError::Config(format!("alpha3 must be non-negative, got {alpha3}")));
    }
    let base = log_softmax(decoder_logits);
    if alpha3 == 0.0 {
        return Ok(base);
    }
    let fused: Vec<f64> = base.iter().zip(attr_log_probs).map(|(b, a)| b + alpha3 * a).collect();
    Ok(log_softmax(&fused))
}

/// Fusion over the full vocabulary: scores every extension `prefix ⊕ v` with
/// the classifier and returns the renormalized log-probabilities.
pub fn fused_logits(
    decoder_logits: &[f64],
    prefix: &[TokenId],
    scorer: &dyn AttributeScorer,
    attribute: usize,
    alpha3: f64,
) -> Result<Vec<f64>> {
    if alpha3 == 0.0 {
        return fuse_log_probs(decoder_logits, &vec![0.0; decoder_logits.len()], 0.0);
    }
    let attr = extension_log_probs(prefix, decoder_logits.len(), scorer, attribute)?;
    fuse_log_probs(decoder_logits, &attr, alpha3)
}

/// `ln P(a | prefix ⊕ v)` for every `v < vocab`.
pub fn extension_log_probs(
    prefix: &[TokenId],
    vocab: usize,
    scorer: &dyn AttributeScorer,
    attribute: usize,
) -> Result<Vec<f64>> {
    let mut ext = prefix.to_vec();
    ext.push(0);
    (0..vocab)
        .map(|v| {
            *ext.last_mut().expect("non-empty") = v as TokenId;
            attribute_log_prob(scorer, &ext, attribute)
        })
        .collect()
}

/// Indices of the `k` largest entries, ties to the lower index.
fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Decoder inputs `[BOS, y…]` and targets `[y…, EOS]`, cut to fit
/// `max_positions`.
pub fn teacher_forcing_pair(summary: &[TokenId], max_positions: usize) -> (Vec<TokenId>, Vec<usize>) {
    let body = &summary[..summary.len().min(max_positions.saturating_sub(1))];
    let mut inputs = Vec::with_capacity(body.len() + 1);
    inputs.push(BOS);
    inputs.extend_from_slice(body);
    let mut targets: Vec<usize> = body.iter().map(|&t| t as usize).collect();
    targets.push(EOS as usize);
    (inputs, targets)
}

/// Encoder input plus the cached paragraph states of one cluster.
#[derive(Clone, Debug)]
pub struct ClusterEncoding {
    pub input: EncoderInput,
    /// `L×d` final-layer paragraph states.
    pub memory: Tensor,
}

/// One cluster ready for teacher-forced training.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub input: EncoderInput,
    pub inputs: Vec<TokenId>,
    pub targets: Vec<usize>,
    /// `positions × V` table of `ln P(a | gold prefix ⊕ v)`, present when
    /// conditional training is on.
    pub fusion: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct SummarizerModel {
    pub config: SummarizerConfig,
    pub weights: ConditioningWeights,
    /// Conditioning class the model was trained for.
    pub attribute: Option<usize>,
    pub params: ParamStore,
    embedding: ParamId,
    position: ParamId,
    encoder: GraphEncoder,
    decoder: Vec<DecoderBlock>,
}

impl SummarizerModel {
    pub fn new(
        config: SummarizerConfig,
        weights: ConditioningWeights,
        attribute: Option<usize>,
        rng: &RngState,
    ) -> Result<Self> {
        weights.validate()?;
        if config.vocab_size == 0 || config.max_summary_tokens < 2 {
            return Err(AcmError::Config(
                "summarizer needs a vocabulary and at least 2 summary positions".into(),
            ));
        }
        let mut rng = rng.split("summarizer-init");
        let mut params = ParamStore::new();
        let d = config.d_model;
        let embedding = params.add_normal("embedding", &[config.vocab_size, d], 0.1, &mut rng);
        let position = params.add_normal("decoder.position", &[config.max_summary_tokens, d], 0.02, &mut rng);
        let encoder = GraphEncoder::new(&mut params, encoder_config(&config, &weights), &mut rng)?;
        let decoder = (0..config.decoder_layers)
            .map(|i| {
                DecoderBlock::new(&mut params, &format!("decoder.block{i}"), d, config.heads, config.ffn_dim, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            weights,
            attribute,
            params,
            embedding,
            position,
            encoder,
            decoder,
        })
    }

    /// Visible paragraphs, similarity graph and, when graph weighting is on,
    /// the per-paragraph attribute scores.
    pub fn prepare_input(
        &self,
        cluster: &DocumentCluster,
        scorer: Option<&dyn AttributeScorer>,
    ) -> Result<EncoderInput> {
        let cond = if self.weights.alpha2 != 0.0 {
            let scorer = scorer
                .ok_or_else(|| AcmError::Config("graph conditional weighting needs a classifier".into()))?;
            let a = self
                .attribute
                .ok_or_else(|| AcmError::Config("graph conditional weighting needs an attribute".into()))?;
            Some((scorer, a))
        } else {
            None
        };
        EncoderInput::prepare(cluster, cond, &self.encoder.config, self.config.max_input_tokens)
    }

    pub fn encode_input(&self, input: EncoderInput) -> Result<ClusterEncoding> {
        let mut tape = Tape::new();
        let trace = self.encoder.forward(&self.params, &mut tape, self.embedding, &input)?;
        let memory = tape.value(trace.states).clone();
        Ok(ClusterEncoding { input, memory })
    }

    pub fn encode(&self, cluster: &DocumentCluster, scorer: Option<&dyn AttributeScorer>) -> Result<ClusterEncoding> {
        self.encode_input(self.prepare_input(cluster, scorer)?)
    }

    /// Paragraph attention weights of every encoder layer, `[layer][head]`,
    /// each `L×L`.
    pub fn attention_maps(&self, input: &EncoderInput) -> Result<Vec<Vec<Tensor>>> {
        let mut tape = Tape::new();
        let trace = self.encoder.forward(&self.params, &mut tape, self.embedding, input)?;
        Ok(trace
            .layers
            .iter()
            .map(|l| l.weights.iter().map(|w| tape.value(*w).clone()).collect())
            .collect())
    }

    /// `n×V` decoder logits for decoder inputs `inputs` over `memory`.
    pub fn decoder_logits(&self, store: &ParamStore, tape: &mut Tape, memory: Var, inputs: &[TokenId]) -> Result<Var> {
        let n = inputs.len();
        if n == 0 {
            return Err(AcmError::Dimension("decoder needs at least one input token".into()));
        }
        if n > self.config.max_summary_tokens {
            return Err(AcmError::Dimension(format!(
                "decoder input of {n} tokens exceeds max_summary_tokens {}",
                self.config.max_summary_tokens
            )));
        }
        let ids: Vec<usize> = inputs.iter().map(|&t| t as usize).collect();
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(AcmError::Index(format!("token {bad} outside vocabulary of {}", self.config.vocab_size)));
        }
        let emb = tape.param(store, self.embedding);
        let tok = tape.gather(emb, &ids)?;
        let pos_table = tape.param(store, self.position);
        let pos = tape.gather(pos_table, &(0..n).collect::<Vec<_>>())?;
        let mut x = tape.add(tok, pos)?;
        let mask = causal_mask(n);
        for block in &self.decoder {
            x = block.forward(store, tape, x, memory, &mask)?;
        }
        let et = tape.transpose(emb)?;
        tape.matmul(x, et)
    }

    /// Log-probabilities of the next token after `prefix` (which normally
    /// starts with BOS).
    pub fn next_token_logprobs(&self, encoding: &ClusterEncoding, prefix: &[TokenId]) -> Result<Vec<f64>> {
        if prefix.len() >= self.config.max_summary_tokens {
            return Err(AcmError::Dimension(format!(
                "prefix of {} tokens leaves no room under max_summary_tokens {}",
                prefix.len(),
                self.config.max_summary_tokens
            )));
        }
        let mut tape = Tape::new();
        let memory = tape.constant(encoding.memory.clone());
        let logits = self.decoder_logits(&self.params, &mut tape, memory, prefix)?;
        let value = tape.value(logits);
        let (n, _) = value.dims2()?;
        Ok(log_softmax(value.row(n - 1)))
    }

    /// Builds the teacher-forcing example, including the fusion table when
    /// conditional training is on.
    pub fn training_example(
        &self,
        cluster: &DocumentCluster,
        scorer: Option<&dyn AttributeScorer>,
    ) -> Result<TrainingExample> {
        let summary = cluster
            .reference_summary
            .as_ref()
            .ok_or_else(|| AcmError::Data("cluster has no reference summary".into()))?;
        let input = self.prepare_input(cluster, scorer)?;
        let (inputs, targets) = teacher_forcing_pair(summary, self.config.max_summary_tokens);
        let fusion = if self.weights.alpha3 != 0.0 {
            let scorer =
                scorer.ok_or_else(|| AcmError::Config("conditional training needs a classifier".into()))?;
            let a = self
                .attribute
                .ok_or_else(|| AcmError::Config("conditional training needs an attribute".into()))?;
            let table = (1..=inputs.len())
                .map(|t| extension_log_probs(&inputs[..t], self.config.vocab_size, scorer, a))
                .collect::<Result<Vec<_>>>()?;
            Some(table)
        } else {
            None
        };
        Ok(TrainingExample {
            input,
            inputs,
            targets,
            fusion,
        })
    }

    /// Mean per-token cross-entropy of the (fused) decoder distribution.
    pub fn example_loss(&self, store: &ParamStore, tape: &mut Tape, ex: &TrainingExample) -> Result<Var> {
        let trace = self.encoder.forward(store, tape, self.embedding, &ex.input)?;
        let logits = self.decoder_logits(store, tape, trace.states, &ex.inputs)?;
        let logits = match &ex.fusion {
            None => logits,
            Some(table) => {
                let bias = self.fusion_bias(tape.value(logits), table, &ex.targets)?;
                let b = tape.constant(bias);
                tape.add(logits, b)?
            }
        };
        tape.cross_entropy(logits, &ex.targets)
    }

    /// `α₃·ln P(a | prefix ⊕ v)` on the top-K decoder candidates and the gold
    /// token of each row, zero elsewhere. Adding it to the logits and taking
    /// a softmax is the renormalized fusion.
    fn fusion_bias(&self, logits: &Tensor, table: &[Vec<f64>], targets: &[usize]) -> Result<Tensor> {
        let (n, v) = logits.dims2()?;
        if table.len() != n {
            return Err(AcmError::Dimension(format!("fusion table has {} rows for {n} positions", table.len())));
        }
        let mut bias = Tensor::zeros(&[n, v]);
        for (t, row) in table.iter().enumerate() {
            let out = &mut bias.data_mut()[t * v..(t + 1) * v];
            let mut picks = top_k(logits.row(t), self.config.fusion_top_k);
            picks.push(targets[t]);
            for c in picks {
                out[c] = self.weights.alpha3 * row[c];
            }
        }
        Ok(bias)
    }

    /// Fraction of summary tokens (EOS included) whose teacher-forced argmax
    /// is the reference token.
    pub fn teacher_forced_accuracy(
        &self,
        clusters: &[DocumentCluster],
        scorer: Option<&dyn AttributeScorer>,
    ) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for cluster in clusters {
            let summary = cluster
                .reference_summary
                .as_ref()
                .ok_or_else(|| AcmError::Data("cluster has no reference summary".into()))?;
            let enc = self.encode(cluster, scorer)?;
            let (inputs, targets) = teacher_forcing_pair(summary, self.config.max_summary_tokens);
            let mut tape = Tape::new();
            let memory = tape.constant(enc.memory);
            let logits = self.decoder_logits(&self.params, &mut tape, memory, &inputs)?;
            let value = tape.value(logits);
            for (t, &gold) in targets.iter().enumerate() {
                if top_k(value.row(t), 1)[0] == gold {
                    correct += 1;
                }
                total += 1;
            }
        }
        Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::new();
        ck.push_scalar("meta.kind", CHECKPOINT_KIND);
        for (k, v) in [
            ("vocab_size", c.vocab_size),
            ("d_model", c.d_model),
            ("heads", c.heads),
            ("encoder_layers", c.encoder_layers),
            ("decoder_layers", c.decoder_layers),
            ("ffn_dim", c.ffn_dim),
            ("max_input_tokens", c.max_input_tokens),
            ("max_summary_tokens", c.max_summary_tokens),
            ("max_paragraphs", c.max_paragraphs),
            ("fusion_top_k", c.fusion_top_k),
        ] {
            ck.push_scalar(format!("meta.{k}"), v as f64);
        }
        ck.push_scalar("meta.sigma", c.sigma);
        ck.push_scalar("meta.alpha1", self.weights.alpha1);
        ck.push_scalar("meta.alpha2", self.weights.alpha2);
        ck.push_scalar("meta.alpha3", self.weights.alpha3);
        ck.push_scalar("meta.attribute", self.attribute.map_or(-1.0, |a| a as f64));
        ck.push_store("param.", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.scalar("meta.kind")? != CHECKPOINT_KIND {
            return Err(AcmError::Checkpoint("not a summarizer checkpoint".into()));
        }
        let config = SummarizerConfig {
            vocab_size: ck.usize("meta.vocab_size")?,
            d_model: ck.usize("meta.d_model")?,
            heads: ck.usize("meta.heads")?,
            encoder_layers: ck.usize("meta.encoder_layers")?,
            decoder_layers: ck.usize("meta.decoder_layers")?,
            ffn_dim: ck.usize("meta.ffn_dim")?,
            sigma: ck.scalar("meta.sigma")?,
            max_input_tokens: ck.usize("meta.max_input_tokens")?,
            max_summary_tokens: ck.usize("meta.max_summary_tokens")?,
            max_paragraphs: ck.usize("meta.max_paragraphs")?,
            fusion_top_k: ck.usize("meta.fusion_top_k")?,
        };
        let weights = ConditioningWeights {
            alpha1: ck.scalar("meta.alpha1")?,
            alpha2: ck.scalar("meta.alpha2")?,
            alpha3: ck.scalar("meta.alpha3")?,
        };
        let attribute = match ck.scalar("meta.attribute")? {
            a if a < 0.0 => None,
            a => Some(a as usize),
        };
        let mut model = Self::new(config, weights, attribute, &RngState::new(0))?;
        ck.fill_store("param.", &mut model.params)?;
        Ok(model)
    }
}

fn encoder_config(config: &SummarizerConfig, weights: &ConditioningWeights) -> EncoderConfig {
    EncoderConfig {
        layers: config.encoder_layers,
        heads: config.heads,
        d_model: config.d_model,
        ffn_dim: config.ffn_dim,
        sigma: config.sigma,
        alpha2: weights.alpha2,
        max_paragraphs: config.max_paragraphs,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummarizerReport {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// Best validation loss seen up to each epoch.
    pub best_val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub train_accuracy: f64,
}

/// Teacher-forced training with Adam, keeping the parameters of the epoch
/// with the lowest validation loss (training loss when `val` is empty).
#[allow(clippy::too_many_arguments)]
pub fn train_summarizer(
    train: &[DocumentCluster],
    val: &[DocumentCluster],
    scorer: Option<&dyn AttributeScorer>,
    attribute: Option<usize>,
    weights: ConditioningWeights,
    config: SummarizerConfig,
    train_config: &SummarizerTrainConfig,
    rng: &RngState,
) -> Result<(SummarizerModel, SummarizerReport)> {
    if train.is_empty() {
        return Err(AcmError::Training("summarizer training set is empty".into()));
    }
    if weights.needs_classifier() {
        let s = scorer.ok_or_else(|| AcmError::Config("conditioning weights need a classifier".into()))?;
        match attribute {
            Some(a) if a < s.classes() => {}
            Some(a) => return Err(AcmError::Config(format!("attribute {a} of {} classes", s.classes()))),
            None => return Err(AcmError::Config("conditioning weights need an attribute".into())),
        }
    }
    let mut model = SummarizerModel::new(config, weights, attribute, rng)?;
    let train_ex = train
        .iter()
        .map(|c| model.training_example(c, scorer))
        .collect::<Result<Vec<_>>>()?;
    let val_ex = val
        .iter()
        .map(|c| model.training_example(c, scorer))
        .collect::<Result<Vec<_>>>()?;

    let mut opt = Adam::new(
        AdamConfig {
            lr: train_config.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut order_rng = rng.split("summarizer-order");
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let accum = train_config.grad_accum.max(1);
    let mut report = SummarizerReport {
        train_losses: Vec::new(),
        val_losses: Vec::new(),
        best_val_losses: Vec::new(),
        best_epoch: 0,
        train_accuracy: 0.0,
    };
    let mut best: Option<(f64, ParamStore)> = None;

    for epoch in 0..train_config.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(accum) {
            let mut grads = model.params.zero_grads();
            for &i in chunk {
                let mut tape = Tape::new();
                let loss = model.example_loss(&model.params, &mut tape, &train_ex[i])?;
                total += tape.value(loss).data()[0];
                let back = tape.backward(loss)?;
                grads.accumulate(&tape.param_grads(&back, &model.params));
            }
            grads.scale(1.0 / chunk.len() as f64);
            opt.step(&mut model.params, &grads)?;
        }
        let train_loss = total / train_ex.len() as f64;
        report.train_losses.push(train_loss);
        let val_loss = if val_ex.is_empty() {
            train_loss
        } else {
            mean_loss(&model, &val_ex)?
        };
        report.val_losses.push(val_loss);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params.clone()));
            report.best_epoch = epoch;
        }
        report.best_val_losses.push(best.as_ref().map_or(val_loss, |(b, _)| *b));
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    report.train_accuracy = model.teacher_forced_accuracy(train, scorer)?;
    Ok((model, report))
}

fn mean_loss(model: &SummarizerModel, examples: &[TrainingExample]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let mut tape = Tape::new();
        let loss = model.example_loss(&model.params, &mut tape, ex)?;
        total += tape.value(loss).data()[0];
    }
    Ok(total / examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::AttributeScore;

    /// Scores a prefix by its last token only.
    struct LastToken(Vec<f64>);

    impl AttributeScorer for LastToken {
        fn classes(&self) -> usize {
            2
        }
        fn score(&self, tokens: &[TokenId]) -> Result<AttributeScore> {
            let p = self.0[*tokens.last().unwrap() as usize];
            Ok(AttributeScore { probs: vec![p, 1.0 - p] })
        }
    }

    #[test]
    fn hand_fusion_case() {
        // Tokens 5, 6, 7 carry the classifier probabilities; the prefix is
        // content so every extension is scored.
        let mut probs = vec![0.5; 8];
        probs[5] = 0.9;
        probs[6] = 0.5;
        probs[7] = 0.1;
        let attr: Vec<f64> = [0.9f64, 0.5, 0.1].iter().map(|p| p.ln()).collect();
        let fused = fuse_log_probs(&[-1.0, -2.0, -3.0], &attr, 1.0).unwrap();
        let raw = [-1.0 + 0.9f64.ln(), -2.0 + 0.5f64.ln(), -3.0 + 0.1f64.ln()];
        let z = raw.iter().map(|x| x.exp()).sum::<f64>().ln();
        for (f, r) in fused.iter().zip(raw) {
            assert!((f - (r - z)).abs() < 1e-12);
        }
        let full = fused_logits(&[0.0; 8], &[5], &LastToken(probs), 0, 1.0).unwrap();
        assert!((full.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_and_uniform_are_identity() {
        let logits = [0.3, -1.2, 2.0, 0.0];
        let base = log_softmax(&logits);
        let scorer = LastToken(vec![0.7; 4]);
        assert_eq!(fused_logits(&logits, &[1], &scorer, 0, 0.0).unwrap(), base);
        let uniform = LastToken(vec![0.5; 4]);
        let f = fused_logits(&logits, &[3], &uniform, 0, 2.5).unwrap();
        for (a, b) in f.iter().zip(&base) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn teacher_pair_shapes() {
        let (i, t) = teacher_forcing_pair(&[7, 8, 9], 64);
        assert_eq!(i, vec![BOS, 7, 8, 9]);
        assert_eq!(t, vec![7, 8, 9, EOS as usize]);
        let (i, t) = teacher_forcing_pair(&[7, 8, 9], 3);
        assert_eq!(i, vec![BOS, 7, 8]);
        assert_eq!(t, vec![7, 8, EOS as usize]);
    }

    #[test]
    fn top_k_breaks_ties_low() {
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 0.0], 2), vec![1, 2]);
        assert_eq!(top_k(&[1.0], 5), vec![0]);
    }

    #[test]
    fn negative_weights_rejected() {
        let w = ConditioningWeights {
            alpha3: -0.1,
            ..Default::default()
        };
        assert!(w.validate().is_err());
    }
}
