//! Decoupled-weight-decay adaptive moment optimizer.

/// Adam with decoupled weight decay: the decay multiplies parameters
/// directly by `1 - lr * wd` before the moment update is applied.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(param_count: usize) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] *= 1.0 - lr * weight_decay;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descends_a_quadratic() {
        // f(x) = (x - 3)^2
        let mut params = vec![0.0];
        let mut opt = AdamW::new(1);
        for _ in 0..2000 {
            let g = 2.0 * (params[0] - 3.0);
            opt.step(&mut params, &[g], 1e-2, 0.0);
        }
        assert!((params[0] - 3.0).abs() < 1e-3, "{}", params[0]);
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_gradient() {
        let mut params = vec![1.0];
        let mut opt = AdamW::new(1);
        opt.step(&mut params, &[0.0], 1e-3, 1e-2);
        assert!((params[0] - (1.0 - 1e-5)).abs() < 1e-12);
    }

    #[test]
    fn first_step_is_learning_rate_sized() {
        let mut params = vec![0.0];
        let mut opt = AdamW::new(1);
        opt.step(&mut params, &[0.5], 1e-3, 0.0);
        // bias-corrected first step moves by about lr in the gradient direction
        assert!((params[0] + 1e-3).abs() < 1e-7, "{}", params[0]);
    }
}
