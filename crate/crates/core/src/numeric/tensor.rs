//! Dense row-major `f64` tensors and the value-level kernels shared by the
//! tape and by tape-free callers.

use crate::error::{AcmError, Result};

/// Numerical floor used by [`layer_norm`] for degenerate rows.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    /// Gradient buffer, same shape as `data` when present.
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AcmError::Dimension(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
            grad: None,
        }
    }

    /// Build a matrix from rows. All rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AcmError::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(AcmError::Dimension(format!(
                "expected a matrix, got shape {other:?}"
            ))),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[row * cols..(row + 1) * cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let cols = *self.shape.last().unwrap_or(&1);
        self.data.chunks(cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, op: &'static str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(AcmError::NonFinite {
                op,
                detail: format!(
                    "element {i} of shape {:?} is {}",
                    self.shape, self.data[i]
                ),
            }),
        }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(AcmError::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::new(vec![c, r], out)
    }
}

/// Row-major matrix product `a (m×k) · b (k×n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(AcmError::Dimension(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    matmul_into(&a.data, &b.data, &mut out, m, k, n);
    Tensor::new(vec![m, n], out)
}

/// `out += a · b`, i-k-j loop order.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// Splits a shape around `axis` into `(outer, len, inner)` strides.
pub(crate) fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(AcmError::Dimension(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    if len == 0 {
        return Err(AcmError::Dimension("softmax over an empty axis".into()));
    }
    Ok((outer, len, inner))
}

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    x.ensure_finite("softmax input")?;
    let (outer, len, inner) = axis_layout(&x.shape, axis)?;
    let mut out = x.data.clone();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| x.data[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..len {
                let e = (x.data[idx(j)] - max).exp();
                out[idx(j)] = e;
                sum += e;
            }
            for j in 0..len {
                out[idx(j)] /= sum;
            }
        }
    }
    Tensor::new(x.shape.clone(), out)
}

/// `log softmax` of a flat vector.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

/// `log Σ exp(x)` of a flat vector.
pub fn logsumexp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `−log softmax(logits)[target]` for a single logit vector.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(AcmError::Index(format!(
            "target {target} out of range for {} classes",
            logits.len()
        )));
    }
    let loss = logsumexp(logits) - logits[target];
    if !loss.is_finite() {
        return Err(AcmError::NonFinite {
            op: "cross_entropy",
            detail: format!("loss {loss}"),
        });
    }
    // Rounding can leave a saturated loss a hair below zero.
    Ok(loss.max(0.0))
}

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + gelu_inner(x).tanh())
}

pub(crate) fn gelu_inner(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    C * (x + 0.044_715 * x * x * x)
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let t = gelu_inner(x).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044_715 * x * x)
}

/// Per-row normalization statistics `(mean, inverse std)`.
///
/// The divisor is `sqrt(max(var, eps))`: rows with real spread come out with
/// unit variance, degenerate rows map to zero.
pub(crate) fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / var.max(LAYER_NORM_EPS).sqrt())
}

/// Layer normalization over the last axis without affine parameters.
pub fn layer_norm(x: &Tensor) -> Result<Tensor> {
    let cols = *x
        .shape
        .last()
        .ok_or_else(|| AcmError::Dimension("layer_norm of a scalar".into()))?;
    if cols == 0 {
        return Err(AcmError::Dimension("layer_norm over an empty row".into()));
    }
    let mut out = x.data.clone();
    for row in out.chunks_mut(cols) {
        let (mean, inv) = row_stats(row);
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
    Tensor::new(x.shape.clone(), out)
}
