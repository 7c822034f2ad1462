//! The two analytic properties of the PROFIT step: zero net motion on linear
//! losses, and descent on the old loss for the quadratic two-task oracle.

use profit_core::profit::run_profit_training;
use profit_core::{OptimizerSpec, OptimizerState, ParamVector, ProfitConfig, ProfitOptimizer};

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::from_slice(v).unwrap()
}

fn linear_drift(c: &[f64], main_lr: f64, lr_ratio: f64) -> f64 {
    let c = pv(c);
    let start = ParamVector::new((0..c.len()).map(|i| 0.037 * i as f64 - 0.5).collect()).unwrap();
    let mut theta = start.clone();
    let config = ProfitConfig::new(OptimizerSpec::sgd(main_lr), lr_ratio);
    let run = run_profit_training(&mut theta, config, 100, &mut std::iter::repeat(()), |_, _| Ok(c.clone()), 0, |_| Ok(()))
        .unwrap();
    assert!(run.traces.iter().all(|t| t.projected && t.omega < 0.0));
    theta.sub(&start).unwrap().norm()
}

#[test]
fn linear_loss_gives_zero_net_change() {
    for (lr, ratio) in [(1e-2, 100.0), (1e-3, 1.0), (0.5, 10.0)] {
        assert!(linear_drift(&[0.7], lr, ratio) <= 1e-12);
        assert!(linear_drift(&[1.0, -2.0, 0.5, 3.0, -0.25], lr, ratio) <= 1e-12);
    }
}

struct TwoTask {
    a: Vec<f64>,
    b: Vec<f64>,
    /// Diagonal curvature of the new loss.
    h: Vec<f64>,
}

impl TwoTask {
    fn old_loss(&self, t: &ParamVector) -> f64 {
        t.as_slice().iter().zip(&self.a).map(|(t, a)| (t - a) * (t - a)).sum()
    }

    fn new_grad(&self, t: &ParamVector) -> ParamVector {
        ParamVector::new(t.as_slice().iter().zip(&self.b).zip(&self.h).map(|((t, b), h)| 2.0 * h * (t - b)).collect()).unwrap()
    }

    /// Runs 200 PROFIT steps from `a`; returns the final old loss after
    /// checking the per-step descent property.
    fn profit(&self, lr: f64) -> f64 {
        let mut theta = pv(&self.a);
        let mut opt = ProfitOptimizer::new(ProfitConfig::new(OptimizerSpec::sgd(lr), 1.0), self.a.len()).unwrap();
        for step in 0..200 {
            let mut probes = Vec::new();
            let mut grad = |t: &ParamVector, _: &()| {
                probes.push(t.clone());
                Ok(self.new_grad(t))
            };
            opt.step(&mut theta, &mut std::iter::repeat(()), &mut grad).unwrap();
            let after_ref = &probes[1];
            assert!(self.old_loss(&theta) < self.old_loss(after_ref), "step {step}");
        }
        self.old_loss(&theta)
    }

    fn sgd(&self, lr: f64) -> f64 {
        let mut theta = pv(&self.a);
        let mut opt = OptimizerState::new(OptimizerSpec::sgd(lr), self.a.len()).unwrap();
        for _ in 0..200 {
            let g = self.new_grad(&theta);
            opt.step(&mut theta, &g).unwrap();
        }
        self.old_loss(&theta)
    }
}

#[test]
fn isotropic_two_task_quadratic() {
    let task = TwoTask { a: vec![0.3, -0.2, 0.5], b: vec![-0.4, 0.6, 0.1], h: vec![1.0; 3] };
    // |a - b|^2 (1 - (1 - 2 lr)^200)^2 with |a - b|^2 = 1.29.
    let sgd = task.sgd(1e-3);
    assert!((sgd - 1.29 * 0.10886593759701507).abs() < 1e-12);
    assert!(task.profit(1e-3) <= 0.25 * sgd);
}

#[test]
fn anisotropic_two_task_quadratic() {
    let task = TwoTask { a: vec![0.3, -0.2, 0.5], b: vec![-0.4, 0.6, 0.1], h: vec![1.0, 10.0, 100.0] };
    assert!(task.profit(1e-3) <= 0.25 * task.sgd(1e-3));
}
