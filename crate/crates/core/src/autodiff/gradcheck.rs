use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{ParamStore, Tape, Var};
use crate::{Error, Result};

/// Gradients smaller than this in magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

/// Compares analytic gradients of `loss_fn` against central finite
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// At most `max_coords` evenly spaced coordinates are probed per tensor.
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`. The closure must be
/// deterministic.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    mut loss_fn: F,
    eps: f64,
    tolerance: f64,
    max_coords: usize,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut report = GradCheckReport {
        tensors: Vec::new(),
        tolerance,
    };
    if store.is_empty() {
        return Ok(report);
    }

    let mut tape = Tape::new();
    let loss = loss_fn(store, &mut tape)?;
    finite(tape.value(loss).data()[0], "loss")?;
    let analytic = tape.backward(loss)?.params();

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(store, &mut tape)?;
        let v = tape.try_value(loss)?.item().ok_or(Error::NonScalarLoss {
            rows: tape.value(loss).rows(),
            cols: tape.value(loss).cols(),
        })?;
        finite(v, "perturbed loss")
    };

    let ids: Vec<_> = store.ids().filter(|id| !store.is_frozen(*id)).collect();
    for id in ids {
        let len = store.value(id).len();
        let probes = max_coords.min(len).max(1);
        let mut check = TensorCheck {
            name: store.name(id).to_string(),
            checked: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for p in 0..probes {
            let idx = p * len / probes;
            let a = analytic.get(id).map_or(0.0, |g| g.data()[idx]);
            finite(a, store.name(id))?;

            let orig = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = orig + eps;
            let plus = eval(store);
            store.value_mut(id).data_mut()[idx] = orig - eps;
            let minus = eval(store);
            store.value_mut(id).data_mut()[idx] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);

            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            check.max_abs_error = check.max_abs_error.max(abs);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.checked += 1;
        }
        report.tensors.push(check);
    }
    Ok(report)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
