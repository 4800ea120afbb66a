//! Beam search with a length penalty and attribute future discriminators.
//!
//! Every extension of a live beam is scored by its base log-likelihood plus
//! `α₁` times the classifier log-probability that the extended prefix
//! expresses the target class. With `α₁ = 0` this is plain beam search.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::AttributeScorer;
use crate::corpus::{DocumentCluster, TokenId, BOS, EOS, PAD};
use crate::error::{AcmError, Result};
use crate::eval::{attribute_probability, corpus_report, CorpusReport};
use crate::summarizer::{ClusterEncoding, SummarizerModel};

/// Anything that yields next-token log-probabilities for a generated prefix.
pub trait StepModel {
    fn vocab_size(&self) -> usize;

    /// `prefix` holds generated tokens only (no start token).
    fn next_log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>>;
}

/// How the attribute term enters a beam's score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeMode {
    /// `Σ_t ln P(a | y₁..y_t)`: one factor per generated token.
    Accumulated,
    /// `ln P(a | y₁..y_n)` of the current prefix only.
    CurrentPrefix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthPenalty {
    /// `|Y|^λ`
    Simple,
    /// `((5 + |Y|) / 6)^λ`
    Gnmt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Next tokens considered per live beam.
    pub shortlist_k: usize,
    pub max_steps: usize,
    pub length_penalty: f64,
    pub penalty_kind: LengthPenalty,
    pub alpha1: f64,
    pub attribute_mode: AttributeMode,
    pub eos: TokenId,
    /// Tokens never generated.
    pub banned: Vec<TokenId>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_width: 5,
            shortlist_k: 200,
            max_steps: 40,
            length_penalty: 0.6,
            penalty_kind: LengthPenalty::Simple,
            alpha1: 0.22,
            attribute_mode: AttributeMode::Accumulated,
            eos: EOS,
            banned: vec![PAD, BOS],
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(AcmError::Config("beam_width must be at least 1".into()));
        }
        if self.shortlist_k < self.beam_width {
            return Err(AcmError::Config(format!(
                "shortlist_k {} is smaller than beam_width {}",
                self.shortlist_k, self.beam_width
            )));
        }
        if !(self.length_penalty >= 0.0) {
            return Err(AcmError::Config("length_penalty must be non-negative".into()));
        }
        if !(self.alpha1 >= 0.0) || !self.alpha1.is_finite() {
            return Err(AcmError::Config("alpha1 must be a finite non-negative number".into()));
        }
        Ok(())
    }

    pub fn penalty(&self, len: usize) -> f64 {
        let n = len.max(1) as f64;
        match self.penalty_kind {
            LengthPenalty::Simple => n.powf(self.length_penalty),
            LengthPenalty::Gnmt => ((5.0 + n) / 6.0).powf(self.length_penalty),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    /// Generated tokens, EOS included when finished.
    pub tokens: Vec<TokenId>,
    pub base_lp: f64,
    pub attr_lp: f64,
    pub combined: f64,
    pub finished: bool,
}

impl Beam {
    fn root() -> Self {
        Self {
            tokens: Vec::new(),
            base_lp: 0.0,
            attr_lp: 0.0,
            combined: 0.0,
            finished: false,
        }
    }

    /// Tokens without the trailing EOS.
    pub fn content(&self, eos: TokenId) -> &[TokenId] {
        match self.tokens.last() {
            Some(&t) if t == eos => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// `combined` descending, then token sequences in lexicographic order.
fn rank(a: &Beam, b: &Beam, key: impl Fn(&Beam) -> f64) -> Ordering {
    key(b).total_cmp(&key(a)).then_with(|| a.tokens.cmp(&b.tokens))
}

pub fn final_score(beam: &Beam, config: &BeamConfig) -> f64 {
    beam.combined / config.penalty(beam.tokens.len())
}

#[derive(Clone, Debug)]
pub struct DecodeOutput {
    pub best: Beam,
    /// All completed or length-capped hypotheses, best first.
    pub candidates: Vec<Beam>,
    /// Surviving beams after each step.
    pub steps: Vec<Vec<Beam>>,
}

/// Attribute scorer bound to a target class, with a per-decode cache keyed
/// by content prefix.
pub struct Discriminator<'a> {
    scorer: &'a dyn AttributeScorer,
    attribute: usize,
    eos: TokenId,
    cache: HashMap<Vec<TokenId>, f64>,
}

impl<'a> Discriminator<'a> {
    pub fn new(scorer: &'a dyn AttributeScorer, attribute: usize, eos: TokenId) -> Result<Self> {
        if attribute >= scorer.classes() {
            return Err(AcmError::Index(format!(
                "attribute {attribute} of {} classes",
                scorer.classes()
            )));
        }
        Ok(Self {
            scorer,
            attribute,
            eos,
            cache: HashMap::new(),
        })
    }

    fn key(&self, tokens: &[TokenId]) -> Vec<TokenId> {
        tokens.iter().copied().filter(|&t| t != self.eos).collect()
    }

    /// `ln P(a | prefix)` for each prefix, scoring uncached ones in a batch.
    pub fn log_probs(&mut self, prefixes: &[&[TokenId]]) -> Result<Vec<f64>> {
        let keys: Vec<Vec<TokenId>> = prefixes.iter().map(|p| self.key(p)).collect();
        let mut missing: Vec<Vec<TokenId>> = Vec::new();
        let mut seen: HashSet<&[TokenId]> = HashSet::new();
        for k in &keys {
            if !k.is_empty() && !self.cache.contains_key(k) && seen.insert(k.as_slice()) {
                missing.push(k.clone());
            }
        }
        if !missing.is_empty() {
            let scores = self.scorer.score_batch(&missing)?;
            for (k, s) in missing.into_iter().zip(scores) {
                self.cache.insert(k, s.log_prob(self.attribute));
            }
        }
        let uniform = -(self.scorer.classes() as f64).ln();
        Ok(keys
            .iter()
            .map(|k| if k.is_empty() { uniform } else { self.cache[k] })
            .collect())
    }
}

/// Indices of the `k` highest finite, non-banned log-probs, ties to the
/// lower id.
fn shortlist(lps: &[f64], k: usize, banned: &[TokenId]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..lps.len())
        .filter(|&v| lps[v].is_finite() && !banned.contains(&(v as TokenId)))
        .collect();
    idx.sort_by(|&a, &b| lps[b].total_cmp(&lps[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Beam search; the attribute term is active when `discriminator` is given
/// and `alpha1 > 0`.
pub fn conditioned_beam_search(
    model: &dyn StepModel,
    mut discriminator: Option<&mut Discriminator<'_>>,
    config: &BeamConfig,
) -> Result<DecodeOutput> {
    config.validate()?;
    if config.max_steps == 0 {
        return Err(AcmError::Config("max_steps must be at least 1".into()));
    }
    let use_attr = config.alpha1 != 0.0 && discriminator.is_some();
    let mut live = vec![Beam::root()];
    let mut pool: Vec<Beam> = Vec::new();
    let mut steps = Vec::new();

    for _ in 0..config.max_steps {
        if live.is_empty() {
            break;
        }
        let mut cands: Vec<Beam> = Vec::new();
        let mut parent_attr: Vec<f64> = Vec::new();
        for beam in &live {
            let lps = model.next_log_probs(&beam.tokens)?;
            if lps.len() != model.vocab_size() {
                return Err(AcmError::Dimension(format!(
                    "step model returned {} log-probs for vocabulary {}",
                    lps.len(),
                    model.vocab_size()
                )));
            }
            for v in shortlist(&lps, config.shortlist_k, &config.banned) {
                let mut tokens = beam.tokens.clone();
                tokens.push(v as TokenId);
                let base_lp = beam.base_lp + lps[v];
                cands.push(Beam {
                    finished: v as TokenId == config.eos,
                    tokens,
                    base_lp,
                    attr_lp: 0.0,
                    combined: base_lp,
                });
                parent_attr.push(beam.attr_lp);
            }
        }
        if use_attr {
            let disc = discriminator.as_deref_mut().expect("checked");
            let prefixes: Vec<&[TokenId]> = cands.iter().map(|c| c.tokens.as_slice()).collect();
            let scores = disc.log_probs(&prefixes)?;
            for ((c, s), parent) in cands.iter_mut().zip(scores).zip(parent_attr) {
                c.attr_lp = match config.attribute_mode {
                    AttributeMode::Accumulated => parent + s,
                    AttributeMode::CurrentPrefix => s,
                };
                c.combined = c.base_lp + config.alpha1 * c.attr_lp;
            }
        }
        cands.sort_by(|a, b| rank(a, b, |x| x.combined));
        cands.truncate(config.beam_width);
        steps.push(cands.clone());
        live.clear();
        for c in cands {
            if c.finished {
                pool.push(c);
            } else {
                live.push(c);
            }
        }
    }
    pool.extend(live);
    pool.sort_by(|a, b| rank(a, b, |x| final_score(x, config)));
    let best = pool
        .first()
        .cloned()
        .ok_or_else(|| AcmError::Data("beam search produced no hypothesis".into()))?;
    Ok(DecodeOutput {
        best,
        candidates: pool,
        steps,
    })
}

/// Unconditioned beam search (`α₁` ignored).
pub fn beam_search(model: &dyn StepModel, config: &BeamConfig) -> Result<DecodeOutput> {
    let plain = BeamConfig {
        alpha1: 0.0,
        ..config.clone()
    };
    conditioned_beam_search(model, None, &plain)
}

/// All sequences up to `max_steps` tokens (ending at EOS or at the cap),
/// scored exactly like the beam search. Exponential; for tests.
pub fn exhaustive_search(
    model: &dyn StepModel,
    mut discriminator: Option<&mut Discriminator<'_>>,
    config: &BeamConfig,
) -> Result<Beam> {
    let use_attr = config.alpha1 != 0.0 && discriminator.is_some();
    let mut frontier = vec![Beam::root()];
    let mut done: Vec<Beam> = Vec::new();
    for _ in 0..config.max_steps {
        let mut next = Vec::new();
        for beam in &frontier {
            let lps = model.next_log_probs(&beam.tokens)?;
            for (v, &lp) in lps.iter().enumerate() {
                if !lp.is_finite() || config.banned.contains(&(v as TokenId)) {
                    continue;
                }
                let mut tokens = beam.tokens.clone();
                tokens.push(v as TokenId);
                let mut b = Beam {
                    finished: v as TokenId == config.eos,
                    base_lp: beam.base_lp + lp,
                    attr_lp: 0.0,
                    combined: 0.0,
                    tokens,
                };
                if use_attr {
                    let d = discriminator.as_deref_mut().expect("checked");
                    let s = d.log_probs(&[b.tokens.as_slice()])?[0];
                    b.attr_lp = match config.attribute_mode {
                        AttributeMode::Accumulated => beam.attr_lp + s,
                        AttributeMode::CurrentPrefix => s,
                    };
                }
                b.combined = b.base_lp + if use_attr { config.alpha1 * b.attr_lp } else { 0.0 };
                if b.finished {
                    done.push(b);
                } else {
                    next.push(b);
                }
            }
        }
        frontier = next;
    }
    done.extend(frontier);
    done.sort_by(|a, b| rank(a, b, |x| final_score(x, config)));
    done.into_iter()
        .next()
        .ok_or_else(|| AcmError::Data("no sequence to enumerate".into()))
}

/// A trained summarizer bound to one encoded cluster.
pub struct SummarizerStep<'a> {
    pub model: &'a SummarizerModel,
    pub encoding: ClusterEncoding,
}

impl StepModel for SummarizerStep<'_> {
    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn next_log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut full = Vec::with_capacity(prefix.len() + 1);
        full.push(BOS);
        full.extend_from_slice(prefix);
        self.model.next_token_logprobs(&self.encoding, &full)
    }
}

/// Decodes one cluster. `scorer` feeds the encoder's attribute scores (when
/// the model uses them) and the future discriminator (when `alpha1 > 0`).
pub fn summarize_cluster(
    model: &SummarizerModel,
    cluster: &DocumentCluster,
    scorer: Option<&dyn AttributeScorer>,
    attribute: usize,
    config: &BeamConfig,
) -> Result<Beam> {
    let encoding = model.encode(cluster, scorer)?;
    let step = SummarizerStep { model, encoding };
    let config = BeamConfig {
        max_steps: config.max_steps.min(model.config.max_summary_tokens - 1),
        ..config.clone()
    };
    let mut disc = match scorer {
        Some(s) if config.alpha1 != 0.0 => Some(Discriminator::new(s, attribute, config.eos)?),
        _ => None,
    };
    if config.alpha1 != 0.0 && disc.is_none() {
        return Err(AcmError::Config("future discriminator needs a classifier".into()));
    }
    Ok(conditioned_beam_search(&step, disc.as_mut(), &config)?.best)
}

/// One row of an ablation: a model decoded with a given `α₁`.
pub struct AblationVariant<'a> {
    pub name: String,
    pub model: &'a SummarizerModel,
    pub alpha1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub report: CorpusReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub attribute: usize,
    pub rows: Vec<AblationRow>,
    /// Decoded token ids per variant, aligned with `rows`.
    #[serde(skip)]
    pub summaries: Vec<Vec<Vec<TokenId>>>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "variant", "a1", "a2", "a3", "R-1", "R-2", "R-L", "mean", "std"
        );
        for r in &self.rows {
            let (m, s) = r.report.consistency.map_or((f64::NAN, f64::NAN), |c| (c.mean, c.std));
            let _ = writeln!(
                out,
                "{:<20} {:>6.2} {:>6.2} {:>6.2} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                r.variant, r.alpha1, r.alpha2, r.alpha3, r.report.rouge1.f1, r.report.rouge2.f1, r.report.rougel.f1, m, s
            );
        }
        out
    }
}

/// Decodes `clusters` with every variant and reports ROUGE against the
/// reference summaries plus target-class probability statistics.
pub fn ablate(
    variants: &[AblationVariant<'_>],
    clusters: &[DocumentCluster],
    scorer: &dyn AttributeScorer,
    attribute: usize,
    config: &BeamConfig,
) -> Result<AblationReport> {
    if clusters.is_empty() {
        return Err(AcmError::Data("ablation needs at least one cluster".into()));
    }
    let references = clusters
        .iter()
        .map(|c| {
            c.reference_summary
                .clone()
                .ok_or_else(|| AcmError::Data("ablation cluster has no reference summary".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(variants.len());
    let mut summaries = Vec::with_capacity(variants.len());
    for v in variants {
        let cfg = BeamConfig {
            alpha1: v.alpha1,
            ..config.clone()
        };
        let mut decoded = Vec::with_capacity(clusters.len());
        let mut probs = Vec::with_capacity(clusters.len());
        for c in clusters {
            let beam = summarize_cluster(v.model, c, Some(scorer), attribute, &cfg)?;
            let content = beam.content(cfg.eos).to_vec();
            probs.push(attribute_probability(scorer, &content, attribute)?);
            decoded.push(content);
        }
        let report = corpus_report(&decoded, &references, Some(&probs))?;
        rows.push(AblationRow {
            variant: v.name.clone(),
            alpha1: v.alpha1,
            alpha2: v.model.weights.alpha2,
            alpha3: v.model.weights.alpha3,
            report,
        });
        summaries.push(decoded);
    }
    Ok(AblationReport {
        attribute,
        rows,
        summaries,
    })
}
