//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every op applied to its [`Var`]s in creation order, so
//! the reverse pass is a single walk from the last node to the first. Values
//! are `Arc`-shared with the [`ParamStore`] so parameter leaves cost nothing
//! to create.

use std::sync::Arc;

use crate::error::{AcmError, Result};
use crate::numeric::params::{Gradients, ParamId, ParamStore};
use crate::numeric::tensor::{self, axis_layout, matmul_into, row_stats, Tensor, LAYER_NORM_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv: Vec<f64>,
        clamped: Vec<bool>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SegmentMean {
        x: Var,
        segments: Vec<(usize, usize)>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Backward {
    grads: Vec<Option<Vec<f64>>>,
}

impl Backward {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AcmError::Dimension(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant leaf. Gradients reaching it are computed but never used.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: store.get_arc(id),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose()?;
        self.push(out, Op::Transpose(x), "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "add")?;
        let out = Tensor::new(ta.shape().to_vec(), zip_map(ta, tb, |x, y| x + y))?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "sub")?;
        let out = Tensor::new(ta.shape().to_vec(), zip_map(ta, tb, |x, y| x - y))?;
        self.push(out, Op::Sub(a, b), "sub")
    }

    /// Adds a row vector (`1×n` or `n`) to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (_, n) = tx.dims2()?;
        if tb.numel() != n {
            return Err(AcmError::Dimension(format!(
                "add_row: bias {:?} does not match {:?}",
                tb.shape(),
                tx.shape()
            )));
        }
        let b = tb.data();
        let data = tx
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(v, c)| v + c))
            .collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        self.push(out, Op::AddRow(x, bias), "add_row")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "mul")?;
        let out = Tensor::new(ta.shape().to_vec(), zip_map(ta, tb, |x, y| x * y))?;
        self.push(out, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * s).collect())?;
        self.push(out, Op::Scale(x, s), "scale")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::new(
            t.shape().to_vec(),
            t.data().iter().map(|&v| tensor::gelu(v)).collect(),
        )?;
        self.push(out, Op::Gelu(x), "gelu")
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = tensor::softmax(self.value(x), axis)?;
        self.push(out, Op::Softmax { x, axis }, "softmax")
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` (length = cols).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = tx.dims2()?;
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        if g.len() != cols || b.len() != cols {
            return Err(AcmError::Dimension("layer_norm affine size".into()));
        }
        let mut xhat = vec![0.0; rows * cols];
        let mut out = vec![0.0; rows * cols];
        let mut inv = Vec::with_capacity(rows);
        let mut clamped = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &tx.data()[r * cols..(r + 1) * cols];
            let (mean, inv_std) = row_stats(row);
            inv.push(inv_std);
            clamped.push(inv_std >= 1.0 / LAYER_NORM_EPS.sqrt());
            for c in 0..cols {
                let h = (row[c] - mean) * inv_std;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let out = Tensor::new(vec![rows, cols], out)?;
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv,
                clamped,
            },
            "layer_norm",
        )
    }

    /// Mean over rows of `−log softmax(logits[r])[targets[r]]`. Returns a scalar.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (rows, classes) = t.dims2()?;
        if targets.len() != rows {
            return Err(AcmError::Dimension(format!(
                "cross_entropy: {} targets for {rows} rows",
                targets.len()
            )));
        }
        let mut probs = Vec::with_capacity(rows * classes);
        let mut loss = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            let row = t.row(r);
            loss += tensor::cross_entropy(row, target)?;
            let lse = tensor::logsumexp(row);
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let out = Tensor::scalar(loss / rows as f64);
        self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            "cross_entropy",
        )
    }

    /// Gathers rows of `table` (`V×d`) by index into an `n×d` matrix.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, d) = t.dims2()?;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(AcmError::Index(format!("row {id} of a {v}-row table")));
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            "gather",
        )
    }

    /// Averages contiguous row ranges `[start, end)`; an empty range yields a
    /// zero row.
    pub fn segment_mean(&mut self, x: Var, segments: &[(usize, usize)]) -> Result<Var> {
        let t = self.value(x);
        let (rows, d) = t.dims2()?;
        let mut data = vec![0.0; segments.len() * d];
        for (s, &(start, end)) in segments.iter().enumerate() {
            if start > end || end > rows {
                return Err(AcmError::Index(format!(
                    "segment {start}..{end} outside {rows} rows"
                )));
            }
            let n = (end - start) as f64;
            for r in start..end {
                for (o, v) in data[s * d..(s + 1) * d].iter_mut().zip(t.row(r)) {
                    *o += v / n;
                }
            }
        }
        let out = Tensor::new(vec![segments.len(), d], data)?;
        self.push(
            out,
            Op::SegmentMean {
                x,
                segments: segments.to_vec(),
            },
            "segment_mean",
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.dims2()?;
        if start + width > cols {
            return Err(AcmError::Index(format!(
                "columns {start}..{} of {cols}",
                start + width
            )));
        }
        let data = (0..rows)
            .flat_map(|r| t.row(r)[start..start + width].iter().copied())
            .collect();
        let out = Tensor::new(vec![rows, width], data)?;
        self.push(out, Op::SliceCols { x, start }, "slice_cols")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| AcmError::Dimension("concat of nothing".into()))?;
        let (rows, _) = self.value(*first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(AcmError::Dimension("concat_cols row mismatch".into()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), "mean")
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Backward> {
        if self.value(root).numel() != 1 {
            return Err(AcmError::Dimension(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &dy, &mut grads)?;
            grads[idx] = Some(dy);
        }
        let out = Backward { grads };
        for (i, g) in out.grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(AcmError::NonFinite {
                        op: "backward",
                        detail: format!("gradient of node {i}"),
                    });
                }
            }
        }
        Ok(out)
    }

    fn propagate(
        &self,
        op: &Op,
        y: &Tensor,
        dy: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<()> {
        let mut acc = |v: Var, g: Vec<f64>| {
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, x) in existing.iter_mut().zip(&g) {
                        *e += x;
                    }
                }
                slot @ None => *slot = Some(g),
            };
        };
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2()?;
                let (_, n) = tb.dims2()?;
                let bt = tb.transpose()?;
                let mut da = vec![0.0; m * k];
                matmul_into(dy, bt.data(), &mut da, m, n, k);
                let at = ta.transpose()?;
                let mut db = vec![0.0; k * n];
                matmul_into(at.data(), dy, &mut db, k, m, n);
                acc(*a, da);
                acc(*b, db);
            }
            Op::Transpose(x) => {
                let (r, c) = y.dims2()?;
                let g = Tensor::new(vec![r, c], dy.to_vec())?.transpose()?;
                acc(*x, g.into_data());
            }
            Op::Add(a, b) => {
                acc(*a, dy.to_vec());
                acc(*b, dy.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, dy.to_vec());
                acc(*b, dy.iter().map(|v| -v).collect());
            }
            Op::AddRow(x, bias) => {
                let n = self.value(*bias).numel();
                let mut db = vec![0.0; n];
                for row in dy.chunks(n) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*x, dy.to_vec());
                acc(*bias, db);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(*a, dy.iter().zip(tb.data()).map(|(g, v)| g * v).collect());
                acc(*b, dy.iter().zip(ta.data()).map(|(g, v)| g * v).collect());
            }
            Op::Scale(x, s) => acc(*x, dy.iter().map(|g| g * s).collect()),
            Op::Gelu(x) => {
                let tx = self.value(*x);
                acc(
                    *x,
                    dy.iter()
                        .zip(tx.data())
                        .map(|(g, &v)| g * tensor::gelu_grad(v))
                        .collect(),
                );
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_layout(y.shape(), *axis)?;
                let yd = y.data();
                let mut dx = vec![0.0; yd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| dy[idx(j)] * yd[idx(j)]).sum();
                        for j in 0..len {
                            dx[idx(j)] = yd[idx(j)] * (dy[idx(j)] - dot);
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv,
                clamped,
            } => {
                let g = self.value(*gamma).data();
                let cols = g.len();
                let rows = inv.len();
                let mut dx = vec![0.0; rows * cols];
                let mut dg = vec![0.0; cols];
                let mut db = vec![0.0; cols];
                let n = cols as f64;
                for r in 0..rows {
                    let dyr = &dy[r * cols..(r + 1) * cols];
                    let xh = &xhat[r * cols..(r + 1) * cols];
                    let dxhat: Vec<f64> = dyr.iter().zip(g).map(|(a, b)| a * b).collect();
                    for c in 0..cols {
                        dg[c] += dyr[c] * xh[c];
                        db[c] += dyr[c];
                    }
                    let sum_d: f64 = dxhat.iter().sum();
                    let dx_row = &mut dx[r * cols..(r + 1) * cols];
                    if clamped[r] {
                        // Variance floored at eps: the scale is constant.
                        for c in 0..cols {
                            dx_row[c] = inv[r] * (dxhat[c] - sum_d / n);
                        }
                    } else {
                        let sum_dx: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            dx_row[c] = inv[r] / n * (n * dxhat[c] - sum_d - xh[c] * sum_dx);
                        }
                    }
                }
                acc(*x, dx);
                acc(*gamma, dg);
                acc(*beta, db);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let rows = targets.len();
                let classes = probs.len() / rows;
                let scale = dy[0] / rows as f64;
                let mut dx = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    dx[r * classes + t] -= 1.0;
                }
                dx.iter_mut().for_each(|v| *v *= scale);
                acc(*logits, dx);
            }
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let (_, d) = t.dims2()?;
                let mut dt = vec![0.0; t.numel()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..d {
                        dt[id * d + c] += dy[r * d + c];
                    }
                }
                acc(*table, dt);
            }
            Op::SegmentMean { x, segments } => {
                let t = self.value(*x);
                let (_, d) = t.dims2()?;
                let mut dx = vec![0.0; t.numel()];
                for (s, &(start, end)) in segments.iter().enumerate() {
                    let n = (end - start) as f64;
                    for r in start..end {
                        for c in 0..d {
                            dx[r * d + c] += dy[s * d + c] / n;
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::SliceCols { x, start } => {
                let t = self.value(*x);
                let (rows, cols) = t.dims2()?;
                let width = y.shape()[1];
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    dx[r * cols + start..r * cols + start + width]
                        .copy_from_slice(&dy[r * width..(r + 1) * width]);
                }
                acc(*x, dx);
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = y.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&dy[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    acc(p, dp);
                }
            }
            Op::Sum(x) => acc(*x, vec![dy[0]; self.value(*x).numel()]),
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                acc(*x, vec![dy[0] / n as f64; n]);
            }
        }
        Ok(())
    }

    /// Sums the gradients of every parameter leaf into a buffer aligned with
    /// `store`.
    pub fn param_grads(&self, back: &Backward, store: &ParamStore) -> Gradients {
        let mut out = store.zero_grads();
        for (i, node) in self.nodes.iter().enumerate().take(back.grads.len()) {
            if let (Op::Param(id), Some(g)) = (&node.op, &back.grads[i]) {
                for (o, v) in out.0[id.index()].iter_mut().zip(g) {
                    *o += v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_matrix_has_unit_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.sum(wv).unwrap();
        let back = tape.backward(loss).unwrap();
        let g = tape.param_grads(&back, &store);
        assert_eq!(g.get(w), &[1.0; 4]);
    }

    #[test]
    fn squared_offset_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(1.0));
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let three = tape.constant(Tensor::scalar(3.0));
        let d = tape.sub(wv, three).unwrap();
        let sq = tape.mul(d, d).unwrap();
        let back = tape.backward(sq).unwrap();
        assert_eq!(tape.param_grads(&back, &store).get(w), &[-4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.backward(x), Err(AcmError::Dimension(_))));
    }

    #[test]
    fn shared_param_accumulates() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(2.0));
        let mut tape = Tape::new();
        let a = tape.param(&store, w);
        let b = tape.param(&store, w);
        let p = tape.mul(a, b).unwrap();
        let back = tape.backward(p).unwrap();
        assert_eq!(tape.param_grads(&back, &store).get(w), &[4.0]);
    }

    #[test]
    fn non_finite_values_abort() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(f64::MAX));
        let r = tape.scale(x, 10.0);
        assert!(matches!(r, Err(AcmError::NonFinite { .. })));
    }
}
