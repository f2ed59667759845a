//! Bias-corrected Adam.

use alloc::vec::Vec;

use crate::autodiff::{ParamStore, Tensor};
use crate::math;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    /// `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `store`.
    /// Frozen tensors are left untouched. Nothing is modified if any
    /// gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for id in store.ids() {
            if !store.is_frozen(id) && !store.grad(id).is_finite() {
                return Err(Error::NonFinite(alloc::format!("gradient of `{}`", store.name(id))));
            }
        }
        if self.first.len() != store.len() {
            self.first = store.ids().map(|id| zeros_like(store.value(id))).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if store.is_frozen(id) {
                continue;
            }
            let grad = store.grad(id).clone();
            let m = &mut self.first[id.index()];
            let v = &mut self.second[id.index()];
            let value = store.value_mut(id);
            for (((w, g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}

fn zeros_like(t: &Tensor) -> Tensor {
    Tensor::zeros(t.rows(), t.cols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamGrads;
    use crate::{Tape, Tensor};

    fn store_with_grad(value: f64, grad: f64) -> ParamStore {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::scalar(value)).unwrap();
        // grad = d(grad·θ)/dθ
        let mut tape = Tape::new();
        let p = tape.param(&store, id);
        let k = tape.constant(Tensor::scalar(grad));
        let l = tape.mul(p, k).unwrap();
        let g: ParamGrads = tape.backward(l).unwrap().params();
        store.accumulate(&g);
        store
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² after bias correction, so Δθ = −lr·g/(|g| + ε).
        let mut store = store_with_grad(1.0, 0.3);
        let mut adam = Adam::new(1e-3);
        adam.step(&mut store).unwrap();
        let theta = store.value(store.find("theta").unwrap()).data()[0];
        let expected = 1.0 - 1e-3 * 0.3 / (0.3 + 1e-8);
        assert!((theta - expected).abs() < 1e-15);
        assert!((1.0 - theta - 1e-3).abs() < 1e-10);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut store = store_with_grad(2.5, 0.0);
        let mut adam = Adam::new(1e-3);
        adam.step(&mut store).unwrap();
        adam.step(&mut store).unwrap();
        assert_eq!(store.value(store.find("theta").unwrap()).data(), [2.5]);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn frozen_tensors_untouched() {
        let mut store = ParamStore::new();
        let frozen = store
            .add_frozen("emb", Tensor::row_vector(alloc::vec![0.1, -0.2]))
            .unwrap();
        let live = store.add("w", Tensor::scalar(1.0)).unwrap();
        let mut tape = Tape::new();
        let e = tape.param(&store, frozen);
        let w = tape.param(&store, live);
        let s = tape.sum(e).unwrap();
        let l = tape.mul(s, w).unwrap();
        store.accumulate(&tape.backward(l).unwrap().params());
        assert_eq!(store.grad(frozen).data(), [0.0, 0.0]);
        let mut adam = Adam::new(0.1);
        adam.step(&mut store).unwrap();
        assert_eq!(store.value(frozen).data(), [0.1, -0.2]);
        assert_ne!(store.value(live).data(), [1.0]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut store = store_with_grad(1.0, f64::NAN);
        let mut adam = Adam::new(1e-3);
        assert!(matches!(adam.step(&mut store), Err(Error::NonFinite(_))));
        assert_eq!(store.value(store.find("theta").unwrap()).data(), [1.0]);
    }
}
