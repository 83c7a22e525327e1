//! First-order parameter-update rules: SGD, momentum, Adagrad, Adadelta and
//! Adam, plus gradient clipping and learning-rate schedules.
//!
//! All rules are deterministic given their state; one [`Optimizer`] instance
//! owns the accumulators for exactly one parameter vector.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("gradient length {got} does not match parameter length {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("non-finite gradient component at index {0}")]
    NonFiniteGradient(usize),
}

/// Which update rule to run, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Sgd {
        lr: f64,
    },
    /// `v ← γv − ηg`, `θ ← θ + v`.
    Momentum {
        lr: f64,
        gamma: f64,
    },
    /// Per-coordinate accumulation of squared gradients (the diagonal of
    /// the gradient outer-product history).
    Adagrad {
        lr: f64,
        eps: f64,
    },
    /// RMS-ratio form; needs no learning rate.
    Adadelta {
        gamma: f64,
        eps: f64,
    },
    /// Bias correction uses `1 − β^t` with the step-indexed power.
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Rule {
    pub fn sgd(lr: f64) -> Self {
        Rule::Sgd { lr }
    }

    pub fn momentum(lr: f64) -> Self {
        Rule::Momentum { lr, gamma: 0.9 }
    }

    pub fn adagrad(lr: f64) -> Self {
        Rule::Adagrad { lr, eps: 1e-8 }
    }

    pub fn adadelta() -> Self {
        Rule::Adadelta {
            gamma: 0.95,
            eps: 1e-6,
        }
    }

    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e−8.
    pub fn adam(lr: f64) -> Self {
        Rule::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter optimizer state: accumulators sized like the parameter
/// vector and a step counter advanced once per [`step`](Optimizer::step).
#[derive(Debug, Clone)]
pub struct Optimizer {
    rule: Rule,
    // momentum velocity, or Adam first moment
    m: Vec<f64>,
    // squared-gradient accumulator/EWMA, or Adam second moment
    v: Vec<f64>,
    // Adadelta squared-update EWMA
    u: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(rule: Rule, n_params: usize) -> Self {
        Optimizer {
            rule,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            u: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Advances `params` in place by one update from `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::ShapeMismatch {
                got: grads.len(),
                want: self.m.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient(i));
        }
        self.t += 1;
        match self.rule {
            Rule::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            Rule::Momentum { lr, gamma } => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.m) {
                    *v = gamma * *v - lr * g;
                    *p += *v;
                }
            }
            Rule::Adagrad { lr, eps } => {
                for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.v) {
                    *acc += g * g;
                    *p -= lr * g / (*acc + eps).sqrt();
                }
            }
            Rule::Adadelta { gamma, eps } => {
                for (((p, g), eg), eu) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.v)
                    .zip(&mut self.u)
                {
                    *eg = gamma * *eg + (1.0 - gamma) * g * g;
                    let delta = -((*eu + eps).sqrt() / (*eg + eps).sqrt()) * g;
                    *eu = gamma * *eu + (1.0 - gamma) * delta * delta;
                    *p += delta;
                }
            }
            Rule::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Rescales `g` to `g / max(1, ‖g‖ / threshold)`, capping its norm.
pub fn clip_gradient(g: &[f64], threshold: f64) -> Vec<f64> {
    assert!(threshold > 0.0, "threshold must be positive");
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = 1.0 / (norm / threshold).max(1.0);
    g.iter().map(|x| x * scale).collect()
}

/// Learning-rate schedule evaluated per epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply by `factor` every `every` epochs.
    StepDecay { every: u32, factor: f64 },
    /// `base · decay^epoch`.
    Exponential { decay: f64 },
}

pub fn lr_schedule(kind: LrSchedule, epoch: u32, base_lr: f64) -> f64 {
    match kind {
        LrSchedule::Constant => base_lr,
        LrSchedule::StepDecay { every, factor } => base_lr * factor.powi((epoch / every) as i32),
        LrSchedule::Exponential { decay } => base_lr * decay.powi(epoch as i32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_single_substitution() {
        let mut opt = Optimizer::new(Rule::sgd(0.1), 1);
        let mut p = [1.0];
        opt.step(&mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() <= 1e-15);
    }

    #[test]
    fn momentum_two_identical_steps() {
        let mut opt = Optimizer::new(Rule::momentum(0.1), 1);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        let after_first = p[0];
        assert!((after_first - (-0.1)).abs() <= 1e-15);
        opt.step(&mut p, &[1.0]).unwrap();
        // v₂ = 0.9·(−0.1) − 0.1 = −0.19
        assert!((p[0] - after_first - (-0.19)).abs() <= 1e-15);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut opt = Optimizer::new(Rule::adam(1e-3), 2);
        let mut p = [0.5, 0.5];
        opt.step(&mut p, &[2.0, -2.0]).unwrap();
        assert!((p[0] - (0.5 - 1e-3)).abs() <= 1e-11);
        assert!((p[1] - (0.5 + 1e-3)).abs() <= 1e-11);
    }

    #[test]
    fn clip_rescales_only_above_threshold() {
        let g = vec![2.0, 0.0];
        let c = clip_gradient(&g, 1.0);
        assert!((c[0] - 1.0).abs() <= 1e-15 && c[1] == 0.0);
        let small = vec![0.3, 0.4];
        assert_eq!(clip_gradient(&small, 1.0), small);
    }

    #[test]
    fn clipped_norm_is_min_of_norm_and_threshold() {
        let mut rng = crate::rng::seeded(50);
        use rand::Rng;
        for _ in 0..50 {
            let g: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let clipped = clip_gradient(&g, 3.0);
            let cn = clipped.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((cn - norm.min(3.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn schedules() {
        assert_eq!(lr_schedule(LrSchedule::Constant, 123, 0.5), 0.5);
        assert_eq!(
            lr_schedule(LrSchedule::Exponential { decay: 0.99 }, 0, 0.5),
            0.5
        );
        let s = LrSchedule::StepDecay {
            every: 100,
            factor: 0.5,
        };
        assert!((lr_schedule(s, 250, 1.0) - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn every_rule_converges_on_the_quadratic_bowl() {
        // L(θ) = ‖θ‖², gradient 2θ, from ‖θ₀‖ = 1
        let rules = [
            Rule::sgd(0.1),
            Rule::momentum(0.1),
            Rule::adagrad(0.1),
            Rule::adadelta(),
            Rule::adam(1e-3),
        ];
        for rule in rules {
            let mut p = [0.6, -0.8];
            let mut opt = Optimizer::new(rule, 2);
            for _ in 0..10_000 {
                let g = [2.0 * p[0], 2.0 * p[1]];
                opt.step(&mut p, &g).unwrap();
            }
            let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!(norm < 1e-3, "{rule:?} ended at ‖θ‖ = {norm}");
        }
    }

    #[test]
    fn adagrad_step_magnitude_is_non_increasing_under_constant_gradient() {
        let mut opt = Optimizer::new(Rule::adagrad(0.5), 1);
        let mut p = [10.0];
        let mut last_step = f64::INFINITY;
        for _ in 0..100 {
            let before = p[0];
            opt.step(&mut p, &[1.0]).unwrap();
            let step = (before - p[0]).abs();
            assert!(step <= last_step + 1e-15);
            last_step = step;
        }
    }

    #[test]
    fn updates_are_bit_deterministic() {
        let run = || {
            let mut opt = Optimizer::new(Rule::adam(0.01), 3);
            let mut p = [0.1, -0.2, 0.3];
            for k in 0..200 {
                let g = [p[0] + k as f64 * 1e-3, p[1] * 2.0, -p[2]];
                opt.step(&mut p, &g).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a, b); // bit-identical
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let mut opt = Optimizer::new(Rule::sgd(0.1), 2);
        let mut p = [0.0, 0.0];
        assert!(matches!(
            opt.step(&mut p, &[1.0]),
            Err(OptimError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            opt.step(&mut p, &[f64::NAN, 0.0]),
            Err(OptimError::NonFiniteGradient(0))
        ));
    }
}
