//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::numeric::params::ParamStore;
use crate::numeric::tape::{Tape, Var};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Smallest gradient norm used as the denominator of the relative error.
/// Parameters whose true gradient vanishes (a key bias under a row softmax,
/// for instance) are then judged on central-difference noise against this
/// scale instead of against zero.
pub const NORM_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂, NORM_FLOOR)`
    /// over the checked entries.
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(NORM_FLOOR)
}

/// Compares tape gradients of `loss` with central differences for every
/// parameter in `store`. At most `max_entries` evenly spaced entries per
/// parameter are perturbed.
pub fn check_gradients<F>(store: &ParamStore, max_entries: usize, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let root = loss(store, &mut tape)?;
    let back = tape.backward(root)?;
    let analytic = tape.param_grads(&back, store);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let v = loss(s, &mut t)?;
        Ok(t.value(v).data()[0])
    };

    let mut work = store.clone();
    let mut params = Vec::new();
    for id in store.ids() {
        let n = store.get(id).numel();
        let stride = n.div_ceil(max_entries.max(1)).max(1);
        let mut a = Vec::new();
        let mut num = Vec::new();
        for j in (0..n).step_by(stride) {
            let orig = store.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + FD_STEP;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig - FD_STEP;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            num.push((plus - minus) / (2.0 * FD_STEP));
            a.push(analytic.get(id)[j]);
        }
        params.push(ParamCheck {
            name: store.name(id).to_string(),
            checked: a.len(),
            rel_error: relative_error(&a, &num),
        });
    }
    Ok(GradCheckReport { params })
}
