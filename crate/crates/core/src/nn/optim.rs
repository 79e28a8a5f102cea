//! SGD with momentum and the cosine-annealing warm-restart schedule: within
//! each restart period the rate falls from the current peak to zero along a
//! half cosine, and every restart scales the peak by the decay factor.

use std::collections::BTreeMap;

use crate::tensor::Tensor;

use super::{Grads, Parameterized};

/// Learning rate at fractional epoch `epoch` (e.g. 3.25 = a quarter into
/// epoch 3): lr0 * decay^cycle * (1 + cos(pi * t)) / 2 with t in [0, 1)
/// the position inside the current period.
pub fn cosine_warm_restart_lr(lr0: f64, period: usize, decay: f64, epoch: f64) -> f64 {
    let period = period.max(1) as f64;
    let cycle = (epoch / period).floor();
    let t = (epoch - cycle * period) / period;
    lr0 * decay.powi(cycle as i32) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// v <- m*v + g + wd*theta; theta <- theta - lr*v, per named parameter.
#[derive(Debug, Default)]
pub struct SgdMomentum {
    velocity: BTreeMap<String, Tensor>,
}

impl SgdMomentum {
    pub fn new() -> Self {
        SgdMomentum {
            velocity: BTreeMap::new(),
        }
    }

    pub fn step(
        &mut self,
        net: &mut impl Parameterized,
        grads: &Grads,
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    ) {
        net.visit_params_mut(&mut |name, theta| {
            let Some(g) = grads.get(name) else {
                return;
            };
            let v = self
                .velocity
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(theta.dims()));
            for ((v, &g), t) in v
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(theta.data_mut())
            {
                *v = momentum * *v + g + weight_decay * *t;
                *t -= lr * *v;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_peaks_at_period_start_and_floors_at_period_end() {
        let (lr0, period, decay) = (0.4, 10, 0.9);
        assert!((cosine_warm_restart_lr(lr0, period, decay, 0.0) - lr0).abs() < 1e-15);
        let end = cosine_warm_restart_lr(lr0, period, decay, 9.999);
        assert!(end < lr0 * 1e-4, "near-zero at period end, got {end}");
        // Second period restarts at the decayed peak.
        let second = cosine_warm_restart_lr(lr0, period, decay, 10.0);
        assert!((second - lr0 * decay).abs() < 1e-15);
        let third = cosine_warm_restart_lr(lr0, period, decay, 20.0);
        assert!((third - lr0 * decay * decay).abs() < 1e-15);
    }

    #[test]
    fn schedule_matches_closed_form_midpoint() {
        // Halfway through a period the cosine factor is exactly 1/2.
        let lr = cosine_warm_restart_lr(1.0, 10, 0.9, 5.0);
        assert!((lr - 0.5).abs() < 1e-15);
    }

    struct Toy {
        w: Tensor,
    }

    impl Parameterized for Toy {
        fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
            f("w", &self.w);
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f("w", &mut self.w);
        }
    }

    fn toy_loss(w: &Tensor, xs: &[(f64, f64)]) -> (f64, Tensor) {
        // Linear regression: loss = mean (w*x - y)^2.
        let wv = w.data()[0];
        let n = xs.len() as f64;
        let mut loss = 0.0;
        let mut grad = 0.0;
        for &(x, y) in xs {
            let err = wv * x - y;
            loss += err * err / n;
            grad += 2.0 * err * x / n;
        }
        (loss, Tensor::new(&[1], vec![grad]).unwrap())
    }

    #[test]
    fn single_step_reduces_convex_loss() {
        let xs = [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)];
        let mut net = Toy {
            w: Tensor::new(&[1], vec![0.0]).unwrap(),
        };
        let (before, grad) = toy_loss(&net.w, &xs);
        let mut grads = Grads::new();
        grads.accumulate("w", grad);
        let mut opt = SgdMomentum::new();
        opt.step(&mut net, &grads, 0.01, 0.0, 0.0);
        let (after, _) = toy_loss(&net.w, &xs);
        assert!(after < before);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let mut net = Toy {
            w: Tensor::new(&[1], vec![1.0]).unwrap(),
        };
        let mut opt = SgdMomentum::new();
        let mut grads = Grads::new();
        grads.accumulate("w", Tensor::new(&[1], vec![1.0]).unwrap());
        opt.step(&mut net, &grads, 0.1, 0.9, 0.0);
        assert!((net.w.data()[0] - 0.9).abs() < 1e-15);
        // Same gradient again: v = 0.9*1 + 1 = 1.9.
        opt.step(&mut net, &grads, 0.1, 0.9, 0.0);
        assert!((net.w.data()[0] - (0.9 - 0.19)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_enters_the_velocity_update() {
        let mut net = Toy {
            w: Tensor::new(&[1], vec![2.0]).unwrap(),
        };
        let mut opt = SgdMomentum::new();
        let mut grads = Grads::new();
        grads.accumulate("w", Tensor::new(&[1], vec![0.0]).unwrap());
        opt.step(&mut net, &grads, 0.5, 0.0, 0.1);
        // v = 0 + 0 + 0.1*2 = 0.2; w = 2 - 0.5*0.2 = 1.9.
        assert!((net.w.data()[0] - 1.9).abs() < 1e-15);
    }
}
