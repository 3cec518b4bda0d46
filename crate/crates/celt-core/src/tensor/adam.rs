//! Bias-corrected Adam over a fixed, ordered list of parameter tensors.

use super::Tensor;
use crate::scalar::Scalar;

/// Optimizer state: one first/second-moment pair per parameter, in the
/// order the parameters were registered.
pub struct AdamState<F: Scalar> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
    step: u64,
    moments: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(learning_rate: F, param_sizes: &[usize]) -> Self {
        AdamState {
            learning_rate,
            beta1: F::from_f64c(0.9),
            beta2: F::from_f64c(0.999),
            epsilon: F::from_f64c(1e-8),
            step: 0,
            moments: param_sizes.iter().map(|&n| (vec![F::zero(); n], vec![F::zero(); n])).collect(),
        }
    }

    pub fn for_params(learning_rate: F, params: &[Tensor<F>]) -> Self {
        let sizes: Vec<usize> = params.iter().map(|p| p.numel()).collect();
        Self::new(learning_rate, &sizes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over `params`, which must match the
    /// registered order. Every parameter must carry a populated gradient;
    /// gradients are consumed (cleared) by the update.
    ///
    /// A parameter whose gradient is entirely zero is skipped — data and
    /// moments untouched — so a zero gradient is the identity regardless
    /// of accumulated optimizer state.
    pub fn step(&mut self, params: &[Tensor<F>]) {
        assert_eq!(
            params.len(),
            self.moments.len(),
            "adam: {} params registered, {} given",
            self.moments.len(),
            params.len()
        );
        self.step += 1;
        let t = self.step as i32;
        let bc1 = F::one() - self.beta1.powi(t);
        let bc2 = F::one() - self.beta2.powi(t);
        for (p, (m, v)) in params.iter().zip(self.moments.iter_mut()) {
            let grad = p
                .take_grad()
                .unwrap_or_else(|| panic!("adam: parameter of shape {:?} has no gradient", p.shape()));
            assert_eq!(
                grad.len(),
                m.len(),
                "adam: gradient length {} does not match registered size {}",
                grad.len(),
                m.len()
            );
            if grad.iter().all(|g| *g == F::zero()) {
                continue;
            }
            p.update_data(|data| {
                for i in 0..data.len() {
                    let g = grad[i];
                    m[i] = self.beta1 * m[i] + (F::one() - self.beta1) * g;
                    v[i] = self.beta2 * v[i] + (F::one() - self.beta2) * g * g;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    data[i] = data[i] - self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
                }
            });
        }
    }
}
