//! Adam with the usual defaults (step 0.001, betas 0.9 / 0.999, eps 1e-8).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one flat parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -1.0];
        let mut opt = Adam::new(2, AdamConfig::default());
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.999).abs() < 1e-9);
        assert!((p[1] + 0.999).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![5.0];
        let mut opt = Adam::new(
            1,
            AdamConfig {
                learning_rate: 0.1,
                ..Default::default()
            },
        );
        for _ in 0..2000 {
            let g = 2.0 * (p[0] - 2.0);
            opt.step(&mut p, &[g]);
        }
        assert!((p[0] - 2.0).abs() < 1e-3);
    }
}
