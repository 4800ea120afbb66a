//! Transformer building blocks shared by the classifier, the graph encoder
//! and the decoder. Each block owns [`ParamId`]s into a caller-held
//! [`ParamStore`] and records its forward pass on a [`Tape`].

use crate::error::{AcmError, Result};
use crate::numeric::{ParamId, ParamStore, RngState, Tape, Tensor, Var};

/// Additive mask value for disallowed attention positions. Finite so the
/// non-finite guard never trips; `exp` of it underflows to exactly zero.
pub const MASKED: f64 = -1e9;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut RngState) -> Self {
        let std = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: store.add_normal(format!("{name}.weight"), &[fan_in, fan_out], std, rng),
            bias: store.add_zeros(format!("{name}.bias"), &[1, fan_out]),
        }
    }

    pub fn zeroed(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: store.add_zeros(format!("{name}.weight"), &[fan_in, fan_out]),
            bias: store.add_zeros(format!("{name}.bias"), &[1, fan_out]),
        }
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let h = tape.matmul(x, w)?;
        tape.add_row(h, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add_filled(format!("{name}.gamma"), &[dim], 1.0),
            beta: store.add_zeros(format!("{name}.beta"), &[dim]),
        }
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut RngState) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.up.forward(store, tape, x)?;
        let h = tape.gelu(h)?;
        self.down.forward(store, tape, h)
    }
}

/// Per-head tensors recorded by one attention call.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub output: Var,
    /// Pre-softmax scores per head, bias included.
    pub scores: Vec<Var>,
    /// Row-stochastic attention weights per head.
    pub weights: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub dim: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut RngState) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(AcmError::Config(format!(
                "model dim {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            dim,
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, rng),
            output: Linear::new(store, &format!("{name}.output"), dim, dim, rng),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Scaled dot-product attention of `queries` over `keys_values`, with an
    /// optional constant additive bias shared by every head.
    pub fn forward(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        queries: Var,
        keys_values: Var,
        bias: Option<&Tensor>,
    ) -> Result<AttentionTrace> {
        let q = self.query.forward(store, tape, queries)?;
        let k = self.key.forward(store, tape, keys_values)?;
        let v = self.value.forward(store, tape, keys_values)?;
        let (nq, _) = tape.value(q).dims2()?;
        let (nk, _) = tape.value(k).dims2()?;
        if nq == 0 || nk == 0 {
            return Err(AcmError::Dimension("attention over zero positions".into()));
        }
        let bias = match bias {
            Some(b) if b.shape() != [nq, nk] => {
                return Err(AcmError::Dimension(format!(
                    "attention bias {:?} does not match {nq}x{nk}",
                    b.shape()
                )))
            }
            Some(b) => Some(tape.constant(b.clone())),
            None => None,
        };
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut contexts = Vec::with_capacity(self.heads);
        let mut scores = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let raw = tape.matmul(qh, kt)?;
            let mut s = tape.scale(raw, scale)?;
            if let Some(b) = bias {
                s = tape.add(s, b)?;
            }
            let a = tape.softmax(s, 1)?;
            contexts.push(tape.matmul(a, vh)?);
            scores.push(s);
            weights.push(a);
        }
        let joined = if contexts.len() == 1 {
            contexts[0]
        } else {
            tape.concat_cols(&contexts)?
        };
        let output = self.output.forward(store, tape, joined)?;
        Ok(AttentionTrace {
            output,
            scores,
            weights,
        })
    }
}

/// Post-norm encoder block: `x = LN(x + Attn(x)); x = LN(x + FFN(x))`.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, hidden, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
        })
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        x: Var,
        bias: Option<&Tensor>,
    ) -> Result<(Var, AttentionTrace)> {
        let trace = self.attention.forward(store, tape, x, x, bias)?;
        let h = tape.add(x, trace.output)?;
        let h = self.norm1.forward(store, tape, h)?;
        let f = self.ffn.forward(store, tape, h)?;
        let out = tape.add(h, f)?;
        let out = self.norm2.forward(store, tape, out)?;
        Ok((out, trace))
    }
}

/// Post-norm decoder block with causal self-attention and cross-attention.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub self_attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross_attention: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
}

impl DecoderBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        Ok(Self {
            self_attention: MultiHeadAttention::new(store, &format!("{name}.self_attn"), dim, heads, rng)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            cross_attention: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), dim, heads, rng)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, hidden, rng),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), dim),
        })
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        x: Var,
        memory: Var,
        causal: &Tensor,
    ) -> Result<Var> {
        let sa = self.self_attention.forward(store, tape, x, x, Some(causal))?;
        let h = tape.add(x, sa.output)?;
        let h = self.norm1.forward(store, tape, h)?;
        let ca = self.cross_attention.forward(store, tape, h, memory, None)?;
        let h2 = tape.add(h, ca.output)?;
        let h2 = self.norm2.forward(store, tape, h2)?;
        let f = self.ffn.forward(store, tape, h2)?;
        let out = tape.add(h2, f)?;
        self.norm3.forward(store, tape, out)
    }
}

/// `n×n` additive mask hiding future positions.
pub fn causal_mask(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            t.data_mut()[i * n + j] = MASKED;
        }
    }
    t
}
