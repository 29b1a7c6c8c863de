//! AdamW with decoupled weight decay, and the linear decay schedule.

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::params::{Gradients, Parameters};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates plus the number of updates applied.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub t: u64,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &Parameters<F>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

impl AdamW {
    /// One update at learning rate `lr`:
    ///
    /// ```text
    /// θ ← θ − lr·wd·θ
    /// m ← β₁m + (1−β₁)g,   v ← β₂v + (1−β₂)g²
    /// θ ← θ − lr · (m / (1−β₁ᵗ)) / (sqrt(v / (1−β₂ᵗ)) + ε)
    /// ```
    pub fn step<F: Scalar>(
        &self,
        params: &mut Parameters<F>,
        grads: &Gradients<F>,
        state: &mut AdamState<F>,
        lr: f64,
    ) -> Result<(), NnError> {
        if grads.tensors.len() != params.len() || state.m.len() != params.len() {
            return Err(NnError::Shape("optimizer state does not match parameters".into()));
        }
        if !grads.all_finite() {
            return Err(NnError::NonFinite("gradient"));
        }
        state.t += 1;
        let t = state.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (F::from_f64(self.beta1), F::from_f64(self.beta2));
        let (one_b1, one_b2) = (F::from_f64(1.0 - self.beta1), F::from_f64(1.0 - self.beta2));
        let decay = F::from_f64(1.0 - lr * self.weight_decay);
        let (lr_f, eps) = (F::from_f64(lr), F::from_f64(self.eps));
        let (bc1, bc2) = (F::from_f64(bc1), F::from_f64(bc2));
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads.tensors[i].data();
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for (j, theta) in p.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *theta = *theta * decay - lr_f * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `base · (1 − step/total)`, zero from `total` on.
pub fn lr_schedule(step: u64, total: u64, base: f64) -> f64 {
    if total == 0 || step >= total {
        return 0.0;
    }
    base * (1.0 - step as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(v: f64) -> Parameters<f64> {
        let mut p = Parameters::new();
        p.push("theta", Tensor::scalar(v));
        p
    }

    fn grad(v: f64) -> Gradients<f64> {
        Gradients {
            tensors: vec![Tensor::scalar(v)],
        }
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_schedule(0, 80_000, 5.0e-5), 5.0e-5);
        assert_eq!(lr_schedule(80_000, 80_000, 5.0e-5), 0.0);
        assert_eq!(lr_schedule(40_000, 80_000, 5.0e-5), 2.5e-5);
        assert_eq!(lr_schedule(90_000, 80_000, 5.0e-5), 0.0);
    }

    #[test]
    fn first_step_matches_hand_recurrence() {
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        let mut p = scalar_params(0.0);
        let mut s = AdamState::new(&p);
        opt.step(&mut p, &grad(1.0), &mut s, 5e-5).unwrap();
        // m̂ = v̂ = 1 after bias correction.
        let expected = -5e-5 * (1.0 / (1.0 + 1e-8));
        assert!((p.tensors()[0].data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let opt = AdamW::default();
        let mut p = scalar_params(0.5);
        let mut s = AdamState::new(&p);
        let gs = [0.3, -0.7];
        let lrs = [1e-3, 5e-4];
        for (g, lr) in gs.iter().zip(lrs) {
            opt.step(&mut p, &grad(*g), &mut s, lr).unwrap();
        }
        let (mut theta, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for (t, (g, lr)) in gs.iter().zip(lrs).enumerate() {
            let t = t as i32 + 1;
            theta -= lr * 0.01 * theta;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            theta -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.tensors()[0].data()[0] - theta).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        let mut p = scalar_params(1.25);
        let mut s = AdamState::new(&p);
        for _ in 0..5 {
            opt.step(&mut p, &grad(0.0), &mut s, 1e-3).unwrap();
        }
        assert_eq!(p.tensors()[0].data()[0], 1.25);
    }

    #[test]
    fn zero_gradient_decays_geometrically() {
        let opt = AdamW::default();
        let (lr, theta0) = (1e-2, 2.0);
        let mut p = scalar_params(theta0);
        let mut s = AdamState::new(&p);
        for k in 1..=3 {
            opt.step(&mut p, &grad(0.0), &mut s, lr).unwrap();
            let expected = theta0 * (1.0 - lr * 0.01f64).powi(k);
            assert!((p.tensors()[0].data()[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let opt = AdamW::default();
        let mut p = scalar_params(1.0);
        let mut s = AdamState::new(&p);
        assert!(opt.step(&mut p, &grad(f64::NAN), &mut s, 1e-3).is_err());
        assert_eq!(s.t, 0);
        assert_eq!(p.tensors()[0].data()[0], 1.0);
    }
}
