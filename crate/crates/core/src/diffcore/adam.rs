//! Adam optimizer with bias correction.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::Param;

/// Optimizer state: per-parameter moment accumulators keyed by name, plus a
/// shared step counter.
pub struct AdamState<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub t: u64,
    moments: HashMap<String, (Vec<F>, Vec<F>)>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr: F::from_f64_lossy(lr),
            beta1: F::from_f64_lossy(0.9),
            beta2: F::from_f64_lossy(0.999),
            eps: F::from_f64_lossy(1e-8),
            t: 0,
            moments: HashMap::new(),
        }
    }

    /// Advance the shared step counter; call once per optimization step,
    /// before updating the individual parameters of that step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn update(&mut self, param: &mut Param<F>, grad: &[F]) -> Result<()> {
        if grad.len() != param.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam grad len {} vs param {} ({})",
                grad.len(),
                param.data.len(),
                param.name
            )));
        }
        debug_assert!(self.t >= 1, "begin_step must precede update");
        let (m, v) = self
            .moments
            .entry(param.name.clone())
            .or_insert_with(|| (vec![F::zero(); grad.len()], vec![F::zero(); grad.len()]));
        let one = F::one();
        let t = F::from_f64_lossy(self.t as f64);
        let bc1 = one - self.beta1.powf(t);
        let bc2 = one - self.beta2.powf(t);
        for i in 0..grad.len() {
            let gi = grad[i];
            m[i] = self.beta1 * m[i] + (one - self.beta1) * gi;
            v[i] = self.beta2 * v[i] + (one - self.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param.data[i] = param.data[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
