//! ROUGE-1/2/L and attribute-consistency statistics.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::classifier::{content_tokens, AttributeScorer};
use crate::corpus::TokenId;
use crate::error::{AcmError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// F1 is 0 when precision and recall are both 0.
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(overlap, candidate);
        let recall = ratio(overlap, reference);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }

    fn mean(items: impl Iterator<Item = Prf>) -> Prf {
        let mut sum = Prf::default();
        let mut n = 0usize;
        for p in items {
            sum.precision += p.precision;
            sum.recall += p.recall;
            sum.f1 += p.f1;
            n += 1;
        }
        if n == 0 {
            return sum;
        }
        let k = n as f64;
        Prf {
            precision: sum.precision / k,
            recall: sum.recall / k,
            f1: sum.f1 / k,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub r1: Prf,
    pub r2: Prf,
    pub rl: Prf,
}

fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap. `n = 0` and empty inputs score zero.
pub fn rouge_n<T: Hash + Eq>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(overlap, cand.values().sum(), refs.values().sum())
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

pub fn rouge<T: Hash + Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore {
        r1: rouge_n(candidate, reference, 1),
        r2: rouge_n(candidate, reference, 2),
        rl: rouge_l(candidate, reference),
    }
}

/// Mean and population standard deviation of target-class probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl ConsistencyReport {
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(AcmError::Data("consistency statistics need at least one summary".into()));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
            count: scores.len(),
        })
    }
}

/// Classifier probability of `class` for a summary's content tokens; an
/// empty summary scores as uniform.
pub fn attribute_probability(scorer: &dyn AttributeScorer, summary: &[TokenId], class: usize) -> Result<f64> {
    if class >= scorer.classes() {
        return Err(AcmError::Index(format!("attribute {class} of {} classes", scorer.classes())));
    }
    let content = content_tokens(summary);
    if content.is_empty() {
        return Ok(1.0 / scorer.classes() as f64);
    }
    Ok(scorer.score(&content)?.prob(class))
}

pub fn consistency_stats(
    summaries: &[Vec<TokenId>],
    scorer: &dyn AttributeScorer,
    class: usize,
) -> Result<ConsistencyReport> {
    let scores = summaries
        .iter()
        .map(|s| attribute_probability(scorer, s, class))
        .collect::<Result<Vec<_>>>()?;
    ConsistencyReport::from_scores(&scores)
}

/// Macro-averaged ROUGE over aligned pairs plus optional consistency stats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub pairs: usize,
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rougel: Prf,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub consistency: Option<ConsistencyReport>,
}

impl CorpusReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>9} {:>9} {:>9}", "metric", "precision", "recall", "f1");
        for (name, p) in [("ROUGE-1", self.rouge1), ("ROUGE-2", self.rouge2), ("ROUGE-L", self.rougel)] {
            let _ = writeln!(out, "{name:<8} {:>9.4} {:>9.4} {:>9.4}", p.precision, p.recall, p.f1);
        }
        if let Some(c) = &self.consistency {
            let _ = writeln!(out, "attribute mean {:.4}  std {:.4}  (n={})", c.mean, c.std, c.count);
        }
        let _ = writeln!(out, "pairs {}", self.pairs);
        out
    }
}

pub fn corpus_report<T: Hash + Eq>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
    attribute_probs: Option<&[f64]>,
) -> Result<CorpusReport> {
    if candidates.len() != references.len() {
        return Err(AcmError::Data(format!(
            "{} candidates for {} references",
            candidates.len(),
            references.len()
        )));
    }
    let scores: Vec<RougeScore> = candidates.iter().zip(references).map(|(c, r)| rouge(c, r)).collect();
    let consistency = match attribute_probs {
        None => None,
        Some(p) if p.len() != candidates.len() => {
            return Err(AcmError::Data(format!(
                "{} attribute scores for {} candidates",
                p.len(),
                candidates.len()
            )))
        }
        Some(p) => Some(ConsistencyReport::from_scores(p)?),
    };
    Ok(CorpusReport {
        pairs: scores.len(),
        rouge1: Prf::mean(scores.iter().map(|s| s.r1)),
        rouge2: Prf::mean(scores.iter().map(|s| s.r2)),
        rougel: Prf::mean(scores.iter().map(|s| s.rl)),
        consistency,
    })
}
