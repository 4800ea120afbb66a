//! Prefix-robust attribute classifier.
//!
//! A small transformer encoder over token prefixes with mean pooling and a
//! zero-initialized class head. Trained on every prefix of each labeled
//! sentence so it can score partial generations.

use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentCluster, LabeledPrefix, TokenId, BOS, EOS, PAD};
use crate::error::{AcmError, Result};
use crate::layers::{EncoderBlock, Linear};
use crate::numeric::{Adam, AdamConfig, Checkpoint, ParamId, ParamStore, RngState, Tape, Tensor, Var};

/// Probabilities are kept inside `[PROB_FLOOR, 1 − PROB_FLOOR]` so their logs
/// stay finite.
pub const PROB_FLOOR: f64 = 1e-6;

const CHECKPOINT_KIND: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub vocab_size: usize,
    pub classes: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            classes: 2,
            d_model: 64,
            heads: 4,
            layers: 2,
            ffn_dim: 128,
            max_len: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            batch_size: 16,
            lr: 2e-3,
        }
    }
}

/// Per-class probabilities for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeScore {
    pub probs: Vec<f64>,
}

impl AttributeScore {
    pub fn uniform(classes: usize) -> Self {
        Self {
            probs: vec![1.0 / classes as f64; classes],
        }
    }

    /// Clamps every entry into `[PROB_FLOOR, 1 − PROB_FLOOR]` while keeping
    /// the total at 1. Clamping can only raise the total (a clipped maximum
    /// implies every other entry was raised by at least as much), so the
    /// excess is taken back from the largest entry.
    pub fn from_probs(mut probs: Vec<f64>) -> Self {
        for p in probs.iter_mut() {
            *p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        }
        let excess: f64 = probs.iter().sum::<f64>() - 1.0;
        if excess > 0.0 {
            let imax = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map_or(0, |(i, _)| i);
            probs[imax] -= excess;
        }
        Self { probs }
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.probs[class]
    }

    pub fn log_prob(&self, class: usize) -> f64 {
        self.probs[class].ln()
    }

    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i)
    }
}

/// Anything that maps a token sequence to class probabilities.
pub trait AttributeScorer {
    fn classes(&self) -> usize;

    fn score(&self, tokens: &[TokenId]) -> Result<AttributeScore>;

    fn score_batch(&self, batch: &[Vec<TokenId>]) -> Result<Vec<AttributeScore>> {
        batch.iter().map(|t| self.score(t)).collect()
    }
}

/// Tokens the classifier sees: everything except PAD, BOS and EOS.
pub fn content_tokens(tokens: &[TokenId]) -> Vec<TokenId> {
    tokens.iter().copied().filter(|&t| t != PAD && t != BOS && t != EOS).collect()
}

/// `ln P(class | tokens)` over the content tokens; an empty content prefix
/// scores as uniform.
pub fn attribute_log_prob(scorer: &dyn AttributeScorer, tokens: &[TokenId], class: usize) -> Result<f64> {
    if class >= scorer.classes() {
        return Err(AcmError::Index(format!("attribute {class} of {} classes", scorer.classes())));
    }
    let content = content_tokens(tokens);
    if content.is_empty() {
        return Ok(-(scorer.classes() as f64).ln());
    }
    Ok(scorer.score(&content)?.log_prob(class))
}

#[derive(Clone, Debug)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub params: ParamStore,
    embedding: ParamId,
    position: ParamId,
    blocks: Vec<EncoderBlock>,
    head: Linear,
}

impl ClassifierModel {
    pub fn new(config: ClassifierConfig, rng: &RngState) -> Result<Self> {
        if config.classes < 2 {
            return Err(AcmError::Config("classifier needs at least 2 classes".into()));
        }
        if config.vocab_size == 0 || config.max_len == 0 {
            return Err(AcmError::Config("classifier vocab_size and max_len must be positive".into()));
        }
        let mut rng = rng.split("classifier-init");
        let mut params = ParamStore::new();
        let d = config.d_model;
        let embedding = params.add_normal("embedding", &[config.vocab_size, d], 0.1, &mut rng);
        let position = params.add_normal("position", &[config.max_len, d], 0.02, &mut rng);
        let blocks = (0..config.layers)
            .map(|i| {
                EncoderBlock::new(&mut params, &format!("block{i}"), d, config.heads, config.ffn_dim, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::zeroed(&mut params, "head", d, config.classes);
        Ok(Self {
            config,
            params,
            embedding,
            position,
            blocks,
            head,
        })
    }

    /// Class logits (`1×C`) for `tokens`, truncated to `max_len`.
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, tokens: &[TokenId]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(AcmError::Data("cannot score an empty prefix".into()));
        }
        let tokens = &tokens[..tokens.len().min(self.config.max_len)];
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let emb = tape.param(store, self.embedding);
        let pos = tape.param(store, self.position);
        let e = tape.gather(emb, &ids)?;
        let p = tape.gather(pos, &positions)?;
        let mut x = tape.add(e, p)?;
        for block in &self.blocks {
            x = block.forward(store, tape, x, None)?.0;
        }
        let pooled = tape.segment_mean(x, &[(0, ids.len())])?;
        self.head.forward(store, tape, pooled)
    }

    pub fn logits(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&self.params, &mut tape, tokens)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Clamped class probabilities for a non-empty prefix.
    pub fn score_prefix(&self, prefix: &[TokenId]) -> Result<AttributeScore> {
        let logits = self.logits(prefix)?;
        let probs = crate::numeric::tensor::softmax(&Tensor::new(vec![logits.len()], logits)?, 0)?;
        Ok(AttributeScore::from_probs(probs.into_data()))
    }

    /// `β_i`: probability that paragraph `i` expresses class `class`.
    pub fn score_paragraph(&self, cluster: &DocumentCluster, i: usize, class: usize) -> Result<f64> {
        if class >= self.config.classes {
            return Err(AcmError::Index(format!("class {class} of {}", self.config.classes)));
        }
        Ok(self.score_prefix(cluster.paragraph_tokens(i)?)?.prob(class))
    }

    pub fn predict(&self, tokens: &[TokenId]) -> Result<usize> {
        Ok(self.score_prefix(tokens)?.argmax())
    }

    pub fn accuracy(&self, data: &[LabeledPrefix]) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for ex in data {
            if self.predict(&ex.tokens)? == ex.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::new();
        ck.push_scalar("meta.kind", CHECKPOINT_KIND);
        for (k, v) in [
            ("vocab_size", c.vocab_size),
            ("classes", c.classes),
            ("d_model", c.d_model),
            ("heads", c.heads),
            ("layers", c.layers),
            ("ffn_dim", c.ffn_dim),
            ("max_len", c.max_len),
        ] {
            ck.push_scalar(format!("meta.{k}"), v as f64);
        }
        ck.push_store("param.", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.scalar("meta.kind")? != CHECKPOINT_KIND {
            return Err(AcmError::Checkpoint("not a classifier checkpoint".into()));
        }
        let config = ClassifierConfig {
            vocab_size: ck.usize("meta.vocab_size")?,
            classes: ck.usize("meta.classes")?,
            d_model: ck.usize("meta.d_model")?,
            heads: ck.usize("meta.heads")?,
            layers: ck.usize("meta.layers")?,
            ffn_dim: ck.usize("meta.ffn_dim")?,
            max_len: ck.usize("meta.max_len")?,
        };
        let mut model = Self::new(config, &RngState::new(0))?;
        ck.fill_store("param.", &mut model.params)?;
        Ok(model)
    }
}

impl AttributeScorer for ClassifierModel {
    fn classes(&self) -> usize {
        self.config.classes
    }

    fn score(&self, tokens: &[TokenId]) -> Result<AttributeScore> {
        self.score_prefix(tokens)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierReport {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub epoch_losses: Vec<f64>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
}

/// 80/10/10 shuffled split.
pub fn split_80_10_10<T: Clone>(data: &[T], rng: &mut RngState) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut idx);
    let n_train = data.len() * 8 / 10;
    let n_val = data.len() / 10;
    let pick = |r: &[usize]| r.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    (
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_val]),
        pick(&idx[n_train + n_val..]),
    )
}

/// Trains with cross-entropy and Adam on an 80/10/10 split, keeping the
/// parameters with the best validation accuracy.
pub fn train_classifier(
    data: &[LabeledPrefix],
    config: ClassifierConfig,
    train: &ClassifierTrainConfig,
    rng: &RngState,
) -> Result<(ClassifierModel, ClassifierReport)> {
    if data.is_empty() {
        return Err(AcmError::Training("classifier training set is empty".into()));
    }
    let mut seen = vec![false; config.classes];
    for ex in data {
        if ex.label >= config.classes {
            return Err(AcmError::Training(format!(
                "label {} out of range for {} classes",
                ex.label, config.classes
            )));
        }
        if ex.tokens.is_empty() {
            return Err(AcmError::Training("empty training prefix".into()));
        }
        seen[ex.label] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(AcmError::Training("training data contains a single class".into()));
    }

    let mut split_rng = rng.split("classifier-split");
    let (train_set, val_set, test_set) = split_80_10_10(data, &mut split_rng);
    let mut model = ClassifierModel::new(config, rng)?;
    let mut opt = Adam::new(
        AdamConfig {
            lr: train.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut order_rng = rng.split("classifier-order");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let batch = train.batch_size.max(1);

    for _ in 0..train.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = model.params.zero_grads();
            for &i in chunk {
                let ex = &train_set[i];
                let mut tape = Tape::new();
                let logits = model.forward(&model.params, &mut tape, &ex.tokens)?;
                let loss = tape.cross_entropy(logits, &[ex.label])?;
                total += tape.value(loss).data()[0];
                let back = tape.backward(loss)?;
                grads.accumulate(&tape.param_grads(&back, &model.params));
            }
            grads.scale(1.0 / chunk.len() as f64);
            opt.step(&mut model.params, &grads)?;
        }
        epoch_losses.push(total / train_set.len().max(1) as f64);
        let val = if val_set.is_empty() {
            model.accuracy(&train_set)?
        } else {
            model.accuracy(&val_set)?
        };
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            best = Some((val, model.params.clone()));
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    let report = ClassifierReport {
        train_accuracy: model.accuracy(&train_set)?,
        val_accuracy: model.accuracy(&val_set)?,
        test_accuracy: model.accuracy(&test_set)?,
        epoch_losses,
        train_size: train_set.len(),
        val_size: val_set.len(),
        test_size: test_set.len(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ClassifierConfig {
        ClassifierConfig {
            vocab_size: 12,
            classes: 2,
            d_model: 8,
            heads: 2,
            layers: 1,
            ffn_dim: 16,
            max_len: 16,
        }
    }

    #[test]
    fn untrained_model_is_uniform() {
        let m = ClassifierModel::new(tiny_config(), &RngState::new(0)).unwrap();
        assert_eq!(m.score_prefix(&[5, 6, 7]).unwrap().probs, vec![0.5, 0.5]);
        assert_eq!(m.score_prefix(&[9]).unwrap().probs, vec![0.5, 0.5]);
    }

    #[test]
    fn empty_prefix_is_rejected() {
        let m = ClassifierModel::new(tiny_config(), &RngState::new(0)).unwrap();
        assert!(m.score_prefix(&[]).is_err());
    }

    #[test]
    fn clamping_keeps_total() {
        let s = AttributeScore::from_probs(vec![1.0 - 2e-12, 1e-12, 1e-12]);
        assert!(s.probs.iter().all(|&p| (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p)));
        assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let two = AttributeScore::from_probs(vec![1.0, 0.0]);
        assert_eq!(two.probs, vec![1.0 - PROB_FLOOR, PROB_FLOOR]);
    }

    #[test]
    fn rejects_bad_training_sets() {
        let cfg = tiny_config();
        let t = ClassifierTrainConfig::default();
        let rng = RngState::new(1);
        assert!(matches!(
            train_classifier(&[], cfg.clone(), &t, &rng),
            Err(AcmError::Training(_))
        ));
        let one = vec![LabeledPrefix { tokens: vec![5], label: 0 }; 4];
        assert!(matches!(
            train_classifier(&one, cfg, &t, &rng),
            Err(AcmError::Training(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = ClassifierModel::new(tiny_config(), &RngState::new(3)).unwrap();
        let back = ClassifierModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.config, m.config);
        for ((n1, t1), (n2, t2)) in m.params.iter().zip(back.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2);
        }
    }

    #[test]
    fn uniform_paragraph_score() {
        use crate::corpus::{DocumentCluster, RawCluster, Vocabulary};
        let vocab = Vocabulary::from_tokens(["a", "b", "."]).unwrap();
        let raw = RawCluster {
            documents: vec!["a b .\n\nb .".into()],
            summary: None,
            labels: None,
            summary_label: None,
        };
        let c = DocumentCluster::from_raw(&raw, &vocab).unwrap();
        let m = ClassifierModel::new(tiny_config(), &RngState::new(0)).unwrap();
        assert_eq!(m.score_paragraph(&c, 1, 0).unwrap(), 0.5);
        assert!(m.score_paragraph(&c, 2, 0).is_err());
    }
}
