//! Adam optimizer with bias-corrected first and second moments.

use serde::{Deserialize, Serialize};

use crate::tensor::Scalar;

/// Hyperparameters; defaults are alpha=0.001, beta1=0.9, beta2=0.999,
/// epsilon=1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment buffers, one pair per parameter slice, plus the step
/// counter shared by all slices.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    step: u64,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> AdamState<T> {
    /// `lens` gives the element count of each parameter slice, in the fixed
    /// order `step` will later receive them.
    pub fn new(lens: &[usize]) -> Self {
        Self {
            step: 0,
            moments: lens
                .iter()
                .map(|&n| (vec![T::zero(); n], vec![T::zero(); n]))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every parameter slice. Slices must arrive in the
    /// order given to `new`, with gradients shape-congruent to parameters.
    pub fn step(&mut self, hp: &AdamHyper, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(params.len(), self.moments.len());
        assert_eq!(grads.len(), self.moments.len());
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(hp.beta1);
        let b2 = T::from_f64(hp.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - hp.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - hp.beta2.powi(t));
        let alpha = T::from_f64(hp.alpha);
        let eps = T::from_f64(hp.epsilon);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.moments.iter_mut())
        {
            assert_eq!(p.len(), m.len(), "gradient/parameter shape mismatch");
            assert_eq!(g.len(), m.len(), "gradient/parameter shape mismatch");
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
