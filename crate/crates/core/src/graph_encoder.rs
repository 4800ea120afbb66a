//! Paragraph encoder with graph-informed, attribute-weighted self-attention.
//!
//! Attention logits between paragraphs `i` and `j` are
//!
//! ```text
//! e_ij = (x_i W_Q)(x_j W_K)ᵀ / sqrt(d_head) + α₂ β_i β_j
//! α_ij = softmax_j(e_ij + R_ij),   R_ij = −(1 − G_ij)² / (2σ²)
//! ```
//!
//! where `G` is the tf-idf similarity graph and `β_i` the classifier's
//! probability that paragraph `i` expresses the conditioning class. `β` is a
//! constant here; no gradient reaches the classifier.

use serde::{Deserialize, Serialize};

use crate::classifier::AttributeScorer;
use crate::corpus::{build_similarity_graph, DocumentCluster, SimilarityGraph, TokenId};
use crate::error::{AcmError, Result};
use crate::layers::{AttentionTrace, EncoderBlock, MultiHeadAttention};
use crate::numeric::{ParamId, ParamStore, RngState, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub ffn_dim: usize,
    /// Width of the Gaussian relation bias.
    pub sigma: f64,
    /// Weight of the `β_i β_j` attention term.
    pub alpha2: f64,
    pub max_paragraphs: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            d_model: 64,
            ffn_dim: 128,
            sigma: 1.0,
            alpha2: 0.4,
            max_paragraphs: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(AcmError::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(AcmError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.alpha2 >= 0.0) {
            return Err(AcmError::Config(format!("alpha2 must be non-negative, got {}", self.alpha2)));
        }
        Ok(())
    }
}

/// `R_ij = −(1 − G_ij)² / (2σ²)`.
pub fn relation_bias(graph: &SimilarityGraph, sigma: f64) -> Result<Tensor> {
    if !(sigma > 0.0) {
        return Err(AcmError::Config(format!("sigma must be positive, got {sigma}")));
    }
    let l = graph.len();
    let denom = 2.0 * sigma * sigma;
    let mut data = Vec::with_capacity(l * l);
    for i in 0..l {
        for j in 0..l {
            let gap = 1.0 - graph.get(i, j);
            data.push(-(gap * gap) / denom);
        }
    }
    Tensor::new(vec![l, l], data)
}

/// `α₂ β_i β_j` as an `L×L` matrix.
pub fn attribute_bias(beta: &[f64], alpha2: f64) -> Tensor {
    let l = beta.len();
    let data = beta
        .iter()
        .flat_map(|bi| beta.iter().map(move |bj| alpha2 * (bi * bj)))
        .collect();
    Tensor::new(vec![l, l], data).expect("square")
}

/// `R + α₂ ββᵀ`, or `R` alone when unconditioned.
pub fn conditioning_bias(relation: &Tensor, beta: Option<&[f64]>, alpha2: f64) -> Result<Tensor> {
    let (l, l2) = relation.dims2()?;
    if l != l2 {
        return Err(AcmError::Dimension("relation bias must be square".into()));
    }
    let Some(beta) = beta else {
        return Ok(relation.clone());
    };
    if beta.len() != l {
        return Err(AcmError::Dimension(format!(
            "{} attribute scores for {l} paragraphs",
            beta.len()
        )));
    }
    let attr = attribute_bias(beta, alpha2);
    let data = attr.data().iter().zip(relation.data()).map(|(a, r)| a + r).collect();
    Tensor::new(vec![l, l], data)
}

/// Graph-informed self-attention with attribute weighting over paragraph
/// states `x` (`L×d`).
pub fn conditioned_attention(
    store: &ParamStore,
    tape: &mut Tape,
    attention: &MultiHeadAttention,
    x: Var,
    relation: &Tensor,
    beta: Option<&[f64]>,
    alpha2: f64,
) -> Result<AttentionTrace> {
    let (l, _) = tape.value(x).dims2()?;
    if l == 0 {
        return Err(AcmError::Dimension("conditioned attention over zero paragraphs".into()));
    }
    let bias = conditioning_bias(relation, beta, alpha2)?;
    if bias.shape() != [l, l] {
        return Err(AcmError::Dimension(format!(
            "relation bias {:?} for {l} paragraphs",
            bias.shape()
        )));
    }
    attention.forward(store, tape, x, x, Some(&bias))
}

/// Everything the encoder needs about one cluster, computed once.
#[derive(Clone, Debug)]
pub struct EncoderInput {
    pub paragraphs: Vec<Vec<TokenId>>,
    pub graph: SimilarityGraph,
    pub relation: Tensor,
    /// `None` runs the encoder without the attribute term.
    pub beta: Option<Vec<f64>>,
}

impl EncoderInput {
    /// Visible paragraphs (input truncation, then `max_paragraphs`), their
    /// similarity graph and, when a scorer is given, `β` for class `target`.
    pub fn prepare(
        cluster: &DocumentCluster,
        scorer: Option<(&dyn AttributeScorer, usize)>,
        config: &EncoderConfig,
        max_input_tokens: usize,
    ) -> Result<Self> {
        let mut paragraphs = cluster.visible_paragraphs(max_input_tokens);
        paragraphs.truncate(config.max_paragraphs);
        if paragraphs.is_empty() {
            return Err(AcmError::Data("cluster has no paragraphs within the input limit".into()));
        }
        let graph = build_similarity_graph(&paragraphs)?;
        let relation = relation_bias(&graph, config.sigma)?;
        let beta = match scorer {
            None => None,
            Some((s, target)) => {
                if target >= s.classes() {
                    return Err(AcmError::Index(format!(
                        "attribute {target} of {} classes",
                        s.classes()
                    )));
                }
                let b = paragraphs
                    .iter()
                    .map(|p| {
                        if p.is_empty() {
                            Ok(1.0 / s.classes() as f64)
                        } else {
                            Ok(s.score(p)?.prob(target))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(b)
            }
        };
        Ok(Self {
            paragraphs,
            graph,
            relation,
            beta,
        })
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }
}

/// Encoder output with the attention of every layer.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    pub states: Var,
    pub layers: Vec<AttentionTrace>,
}

#[derive(Clone, Debug)]
pub struct GraphEncoder {
    pub config: EncoderConfig,
    position: ParamId,
    blocks: Vec<EncoderBlock>,
}

impl GraphEncoder {
    pub fn new(store: &mut ParamStore, config: EncoderConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let position = store.add_normal(
            "encoder.position",
            &[config.max_paragraphs, config.d_model],
            0.02,
            rng,
        );
        let blocks = (0..config.layers)
            .map(|i| {
                EncoderBlock::new(
                    store,
                    &format!("encoder.block{i}"),
                    config.d_model,
                    config.heads,
                    config.ffn_dim,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            position,
            blocks,
        })
    }

    /// Paragraph embeddings (mean token embedding + paragraph position)
    /// followed by the conditioned encoder stack.
    pub fn forward(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        embedding: ParamId,
        input: &EncoderInput,
    ) -> Result<EncoderTrace> {
        let l = input.len();
        if l == 0 {
            return Err(AcmError::Dimension("encoder input has no paragraphs".into()));
        }
        let mut ids = Vec::new();
        let mut segments = Vec::with_capacity(l);
        for p in &input.paragraphs {
            let start = ids.len();
            ids.extend(p.iter().map(|&t| t as usize));
            segments.push((start, ids.len()));
        }
        let emb = tape.param(store, embedding);
        let tokens = tape.gather(emb, &ids)?;
        let para = tape.segment_mean(tokens, &segments)?;
        let pos_table = tape.param(store, self.position);
        let pos = tape.gather(pos_table, &(0..l).collect::<Vec<_>>())?;
        let mut x = tape.add(para, pos)?;

        let bias = conditioning_bias(&input.relation, input.beta.as_deref(), self.config.alpha2)?;
        let mut layers = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, trace) = block.forward(store, tape, x, Some(&bias))?;
            x = out;
            layers.push(trace);
        }
        Ok(EncoderTrace { states: x, layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_bias_cases() {
        let g = SimilarityGraph::from_matrix(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = relation_bias(&g, 1.0).unwrap();
        assert_eq!(r.data(), &[0.0, -0.5, -0.5, 0.0]);
        let h = SimilarityGraph::from_matrix(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        assert_eq!(relation_bias(&h, 0.5).unwrap().at(0, 1), -0.5);
        assert!(matches!(relation_bias(&g, 0.0), Err(AcmError::Config(_))));
        assert!(relation_bias(&g, -1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = EncoderConfig {
            heads: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let neg = EncoderConfig {
            alpha2: -0.1,
            ..Default::default()
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn attribute_term_is_symmetric() {
        let b = attribute_bias(&[0.9, 0.2, 0.55], 0.4);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(b.at(i, j), b.at(j, i));
            }
        }
        assert_eq!(b.at(0, 1), 0.4 * (0.9 * 0.2));
    }

    #[test]
    fn beta_length_checked() {
        let r = Tensor::zeros(&[2, 2]);
        assert!(conditioning_bias(&r, Some(&[1.0]), 0.4).is_err());
    }
}
