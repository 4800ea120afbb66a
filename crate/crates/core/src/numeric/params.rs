//! Named parameter storage, gradient buffers and the Adam optimizer.

use std::sync::Arc;

use crate::error::{AcmError, Result};
use crate::numeric::rng::RngState;
use crate::numeric::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An ordered set of named tensors. Values are reference counted so a tape
/// can borrow them as leaves without copying.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    /// Adds a tensor drawn from `N(0, std²)`.
    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut RngState,
    ) -> ParamId {
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.normal() * std).collect();
        let t = Tensor::new(shape.to_vec(), data).expect("shape matches data");
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_filled(&mut self, name: impl Into<String>, shape: &[usize], v: f64) -> ParamId {
        self.add(name, Tensor::filled(shape, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub(crate) fn get_arc(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.values[id.0])
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().map(|v| v.as_ref()))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    /// Copies values from `other`, which must have the same layout.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(AcmError::Checkpoint("parameter layout differs".into()));
        }
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            if dst.shape() != src.shape() {
                return Err(AcmError::Checkpoint(format!(
                    "shape {:?} vs {:?}",
                    dst.shape(),
                    src.shape()
                )));
            }
            *dst = Arc::clone(src);
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients(self.values.iter().map(|v| vec![0.0; v.numel()]).collect())
    }
}

/// One gradient buffer per parameter, aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub(crate) Vec<Vec<f64>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.0.iter_mut().flatten() {
            *v *= s;
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (i, g) in self.0.iter().enumerate() {
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(AcmError::NonFinite {
                    op: "backward",
                    detail: format!("parameter {i} gradient element {j} is {}", g[j]),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = store.zero_grads().0;
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. Non-finite gradients abort the step before any
    /// parameter is touched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        grads.ensure_finite()?;
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.0.iter().enumerate() {
            let param = Arc::make_mut(&mut store.values[i]);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in param.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_moves_against_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(vec![2], vec![1.0, -1.0]).unwrap());
        let mut opt = Adam::new(AdamConfig::default(), &store);
        let mut g = store.zero_grads();
        g.0[0] = vec![0.5, -0.5];
        opt.step(&mut store, &g).unwrap();
        // First Adam step has magnitude lr regardless of gradient scale.
        let w = store.get(id).data();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn adam_rejects_nan_without_mutating() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(2.0));
        let before = store.get(ParamId(0)).clone();
        let mut opt = Adam::new(AdamConfig::default(), &store);
        let mut g = store.zero_grads();
        g.0[0][0] = f64::NAN;
        assert!(matches!(
            opt.step(&mut store, &g),
            Err(AcmError::NonFinite { .. })
        ));
        assert_eq!(store.get(ParamId(0)), &before);
        assert_eq!(opt.steps(), 0);
    }
}
