//! Adam with decoupled weight decay, plus global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::kv::KvRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Gradients are rescaled so their global L2 norm does not exceed this.
    pub max_grad_norm: f64,
}

impl Default for AdamWSettings {
    fn default() -> Self {
        AdamWSettings {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            max_grad_norm: 1.0,
        }
    }
}

impl AdamWSettings {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail validation
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| (0.0..1.0).contains(&b);
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) || !(self.weight_decay >= 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config(
                "epsilon and max_grad_norm must be positive, weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn write_to(&self, r: &mut KvRecord) {
        r.set("adam_beta1", self.beta1)
            .set("adam_beta2", self.beta2)
            .set("adam_epsilon", self.epsilon)
            .set("weight_decay", self.weight_decay)
            .set("max_grad_norm", self.max_grad_norm);
    }
}

/// Scales `grads` in place so the global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        grads.iter_mut().for_each(|g| *g *= coef);
    }
    norm
}

/// Optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamW {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl AdamW {
    pub fn new(num_params: usize) -> Self {
        AdamW {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn reset(&mut self) {
        self.first_moment.iter_mut().for_each(|m| *m = 0.0);
        self.second_moment.iter_mut().for_each(|v| *v = 0.0);
        self.steps = 0;
    }

    /// One update. `grads` should already be clipped.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, s: &AdamWSettings) {
        assert_eq!(params.len(), self.first_moment.len());
        assert_eq!(grads.len(), params.len());
        self.steps += 1;
        let t = self.steps as i32;
        let bias1 = 1.0 - s.beta1.powi(t);
        let bias2_sqrt = (1.0 - s.beta2.powi(t)).sqrt();
        let step_size = lr / bias1;
        let decay = 1.0 - lr * s.weight_decay;

        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *p *= decay;
            *m = s.beta1 * *m + (1.0 - s.beta1) * g;
            *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
            let denom = v.sqrt() / bias2_sqrt + s.epsilon;
            *p -= step_size * *m / denom;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![3.0, 4.0];
        let norm = clip_grad_norm(&mut g, 1.0);
        assert_eq!(norm, 5.0);
        let clipped = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((clipped - 1.0).abs() < 1e-6);

        let mut small = vec![0.1, 0.0];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, [0.1, 0.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // After one step the bias-corrected ratio m/sqrt(v) is sign(g).
        let s = AdamWSettings { weight_decay: 0.0, ..Default::default() };
        let mut p = vec![1.0, -1.0];
        let mut opt = AdamW::new(2);
        opt.step(&mut p, &[0.5, -2.0], 0.1, &s);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let s = AdamWSettings::default();
        let mut p = vec![2.0];
        let mut opt = AdamW::new(1);
        opt.step(&mut p, &[0.0], 0.5, &s);
        assert!((p[0] - 2.0 * (1.0 - 0.5 * 0.01)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_settings() {
        let bad = AdamWSettings { beta1: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(AdamWSettings::default().validate().is_ok());
    }
}
