use serde::{Deserialize, Serialize};

use super::Parameterized;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty added to the gradient; 0 disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam moments and step counter.
///
/// `learning_rate` is public and read on every step so schedules can change
/// it between epochs without resetting the moments.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        assert!(config.learning_rate > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&config.beta1) && (0.0..1.0).contains(&config.beta2));
        AdamState {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            weight_decay: config.weight_decay,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// One bias-corrected Adam update over every parameter block.
    pub fn step<P: Parameterized + ?Sized>(&mut self, params: &mut P) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr, wd) = (
            self.beta1,
            self.beta2,
            self.epsilon,
            self.learning_rate,
            self.weight_decay,
        );
        let first = &mut self.first_moment;
        let second = &mut self.second_moment;
        let mut block = 0;
        params.visit_params(&mut |b| {
            if first.len() <= block {
                first.push(vec![0.0; b.values.len()]);
                second.push(vec![0.0; b.values.len()]);
            }
            let m = &mut first[block];
            let v = &mut second[block];
            assert_eq!(m.len(), b.values.len(), "parameter block {} changed shape", b.name);
            for k in 0..b.values.len() {
                let g = b.grads[k] + wd * b.values[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let m_hat = m[k] / correction1;
                let v_hat = v[k] / correction2;
                b.values[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            block += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamBlock;

    struct Flat {
        values: Vec<f64>,
        grads: Vec<f64>,
    }

    impl Parameterized for Flat {
        fn visit_params(&mut self, f: &mut dyn FnMut(ParamBlock<'_>)) {
            let n = self.values.len();
            f(ParamBlock {
                name: "w".into(),
                shape: (1, n),
                values: &mut self.values,
                grads: &mut self.grads,
            });
        }
    }

    fn adam(lr: f64) -> AdamState {
        AdamState::new(AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        })
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Flat {
            values: vec![1.0, -2.0],
            grads: vec![0.0, 0.0],
        };
        let mut s = adam(0.01);
        for _ in 0..5 {
            s.step(&mut p);
        }
        assert_eq!(p.values, vec![1.0, -2.0]);
        assert_eq!(s.step_count, 5);
    }

    #[test]
    fn first_step_size_follows_the_formula() {
        let mut p = Flat {
            values: vec![0.0],
            grads: vec![1.0],
        };
        adam(0.01).step(&mut p);
        // m_hat = 1, v_hat = 1
        let expected = -0.01 / (1.0 + 1e-8);
        assert!((p.values[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut p = Flat {
            values: vec![0.0, 0.0],
            grads: vec![0.3, -2.0],
        };
        let mut s = adam(0.01);
        for _ in 0..50 {
            s.step(&mut p);
        }
        assert!(p.values[0] < 0.0 && p.values[1] > 0.0);
    }

    #[test]
    fn first_update_scales_with_learning_rate() {
        let run = |lr: f64| {
            let mut p = Flat {
                values: vec![0.5, -0.25, 3.0],
                grads: vec![0.7, -1e-3, 42.0],
            };
            adam(lr).step(&mut p);
            [p.values[0] - 0.5, p.values[1] + 0.25, p.values[2] - 3.0]
        };
        let base = run(0.001);
        let scaled = run(0.004);
        for (a, b) in base.iter().zip(&scaled) {
            assert!((b - 4.0 * a).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }
}
