//! Paragraph similarity graph from tf-idf cosine similarity.

use std::collections::HashMap;

use super::cluster::DocumentCluster;
use super::vocab::TokenId;
use crate::error::{AcmError, Result};
use crate::numeric::Tensor;

/// Symmetric `L×L` similarity matrix with unit diagonal, entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGraph {
    size: usize,
    values: Vec<f64>,
}

impl SimilarityGraph {
    pub fn from_matrix(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(AcmError::Dimension(format!(
                "{} values for a {size}x{size} graph",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(AcmError::Data("similarity outside [0, 1]".into()));
        }
        Ok(Self { size, values })
    }

    /// All-ones graph: every relation bias vanishes.
    pub fn complete(size: usize) -> Self {
        Self {
            size,
            values: vec![1.0; size * size],
        }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.size, self.size], self.values.clone()).expect("square")
    }
}

/// tf-idf cosine similarity between paragraphs.
///
/// Term frequency is the raw count; `idf(t) = ln((1 + L) / (1 + df(t))) + 1`
/// over the `L` paragraphs given. An empty paragraph has zero similarity to
/// every other paragraph and 1 to itself.
pub fn build_similarity_graph(paragraphs: &[Vec<TokenId>]) -> Result<SimilarityGraph> {
    let l = paragraphs.len();
    if l == 0 {
        return Err(AcmError::Data("similarity graph needs at least one paragraph".into()));
    }
    let mut df: HashMap<TokenId, usize> = HashMap::new();
    let counts: Vec<HashMap<TokenId, f64>> = paragraphs
        .iter()
        .map(|p| {
            let mut tf: HashMap<TokenId, f64> = HashMap::new();
            for &t in p {
                *tf.entry(t).or_default() += 1.0;
            }
            for &t in tf.keys() {
                *df.entry(t).or_default() += 1;
            }
            tf
        })
        .collect();
    let idf = |t: &TokenId| ((1.0 + l as f64) / (1.0 + df[t] as f64)).ln() + 1.0;

    // Sorted sparse vectors make the dot products order-deterministic.
    let vectors: Vec<Vec<(TokenId, f64)>> = counts
        .iter()
        .map(|tf| {
            let mut v: Vec<(TokenId, f64)> = tf.iter().map(|(t, c)| (*t, c * idf(t))).collect();
            v.sort_by_key(|(t, _)| *t);
            v
        })
        .collect();
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt())
        .collect();

    let mut values = vec![0.0; l * l];
    for i in 0..l {
        values[i * l + i] = 1.0;
        for j in i + 1..l {
            let sim = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                sparse_dot(&vectors[i], &vectors[j]) / (norms[i] * norms[j])
            };
            let sim = sim.clamp(0.0, 1.0);
            values[i * l + j] = sim;
            values[j * l + i] = sim;
        }
    }
    SimilarityGraph::from_matrix(l, values)
}

/// Graph over the paragraphs of `cluster` that fit in the model input.
pub fn cluster_graph(cluster: &DocumentCluster, max_input_tokens: usize) -> Result<SimilarityGraph> {
    build_similarity_graph(&cluster.visible_paragraphs(max_input_tokens))
}

fn sparse_dot(a: &[(TokenId, f64)], b: &[(TokenId, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}
