use crate::error::AutodiffError;
use crate::Result;

/// Adam hyperparameters. Defaults: `alpha = 2e-4`, `beta1 = 0.9`,
/// `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            alpha: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_alpha(alpha: f64) -> Self {
        AdamHyper {
            alpha,
            ..Default::default()
        }
    }
}

/// Bias-corrected Adam state over a fixed list of parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(hyper: AdamHyper, slot_sizes: &[usize]) -> Self {
        AdamState {
            hyper,
            step: 0,
            m: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn slots(&self) -> usize {
        self.m.len()
    }

    /// One update over all slots. `params[i]` and `grads[i]` must match the
    /// slot sizes given at construction. A non-finite gradient aborts the
    /// whole step before any parameter is touched.
    pub fn apply<'a>(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&'a [f64]],
        names: impl Fn(usize) -> String,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(AutodiffError::invalid(
                "adam",
                format!(
                    "expected {} slots, got {} params / {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.m[i].len() {
                return Err(AutodiffError::invalid(
                    "adam",
                    format!("slot {i} gradient length {} != {}", g.len(), self.m[i].len()),
                ));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(AutodiffError::NonFiniteGradient { name: names(i) });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamHyper {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (slot, grad) in grads.iter().enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let p = &mut *params[slot];
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Rebuild state from serialized moments (checkpoint restore).
    pub fn from_parts(hyper: AdamHyper, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Self {
        AdamState { hyper, step, m, v }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut state = AdamState::new(AdamHyper::default(), &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        let g = vec![0.0; 3];
        state
            .apply(&mut [&mut p], &[&g], |_| "p".into())
            .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_update_magnitude_approaches_alpha() {
        let hyper = AdamHyper::with_alpha(1e-3);
        let mut state = AdamState::new(hyper, &[1]);
        let mut p = vec![0.0];
        let g = vec![0.7];
        let mut last = p[0];
        let mut step_size = 0.0;
        for _ in 0..500 {
            state.apply(&mut [&mut p], &[&g], |_| "p".into()).unwrap();
            step_size = (p[0] - last).abs();
            last = p[0];
        }
        // With a constant gradient, |update| -> alpha * sign(g).
        assert!((step_size - hyper.alpha).abs() < 1e-5, "step {step_size}");
    }

    #[test]
    fn nan_gradient_aborts_without_touching_parameters() {
        let mut state = AdamState::new(AdamHyper::default(), &[2]);
        let mut p = vec![1.0, 2.0];
        let before = p.clone();
        let g = vec![0.1, f64::NAN];
        let err = state.apply(&mut [&mut p], &[&g], |i| format!("slot{i}"));
        assert!(err.is_err());
        assert_eq!(p, before);
        assert_eq!(state.step, 0);
    }
}
