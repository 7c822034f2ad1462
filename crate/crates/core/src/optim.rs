//! First-order optimizers behind one step interface.
//!
//! The same [`OptimizerState`] type serves as PROFIT's main optimizer and as
//! its reference optimizer. None of them applies weight decay.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::{check_finite, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp { rho: f64, eps: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const RMSPROP_DEFAULT: OptimizerKind = OptimizerKind::RmsProp { rho: 0.9, eps: 1e-8 };
    pub const ADAM_DEFAULT: OptimizerKind = OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp { .. } => "rmsprop",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl OptimizerSpec {
    pub fn sgd(learning_rate: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, learning_rate }
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self { kind: OptimizerKind::RMSPROP_DEFAULT, learning_rate }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self { kind: OptimizerKind::ADAM_DEFAULT, learning_rate }
    }

    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self { learning_rate, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidOptimizer("learning rate must be positive and finite"));
        }
        let decay_ok = |d: f64| (0.0..1.0).contains(&d);
        let eps_ok = |e: f64| e.is_finite() && e > 0.0;
        match self.kind {
            OptimizerKind::Sgd => Ok(()),
            OptimizerKind::RmsProp { rho, eps } => {
                if !decay_ok(rho) {
                    Err(Error::InvalidOptimizer("rmsprop decay must lie in [0, 1)"))
                } else if !eps_ok(eps) {
                    Err(Error::InvalidOptimizer("epsilon must be positive"))
                } else {
                    Ok(())
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if !decay_ok(beta1) || !decay_ok(beta2) {
                    Err(Error::InvalidOptimizer("adam betas must lie in [0, 1)"))
                } else if !eps_ok(eps) {
                    Err(Error::InvalidOptimizer("epsilon must be positive"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Accumulators of one optimizer, aligned with a parameter vector of fixed
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    spec: OptimizerSpec,
    dim: usize,
    /// Adam first moment.
    first: Vec<f64>,
    /// RMSProp / Adam squared-gradient average.
    second: Vec<f64>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(spec: OptimizerSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        if dim == 0 {
            return Err(Error::InvalidOptimizer("parameter dimension must be at least 1"));
        }
        let (first, second) = match spec.kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::RmsProp { .. } => (Vec::new(), vec![0.0; dim]),
            OptimizerKind::Adam { .. } => (vec![0.0; dim], vec![0.0; dim]),
        };
        Ok(Self { spec, dim, first, second, steps: 0 })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Allocated accumulator buffers, in order (first moment, second moment).
    pub fn buffers(&self) -> Vec<&[f64]> {
        [&self.first, &self.second].into_iter().filter(|b| !b.is_empty()).map(Vec::as_slice).collect()
    }

    /// Applies one update to `theta` in place.
    ///
    /// Inputs are validated before anything is touched. A non-finite result
    /// (overflow) is reported as an error after the fact.
    pub fn step(&mut self, theta: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch { left: theta.len(), right: self.dim });
        }
        if grad.len() != self.dim {
            return Err(Error::DimensionMismatch { left: grad.len(), right: self.dim });
        }
        check_finite(grad.as_slice(), "gradient")?;

        let lr = self.spec.learning_rate;
        let g = grad.as_slice();
        let w = theta.values_mut();
        self.steps += 1;
        match self.spec.kind {
            OptimizerKind::Sgd => {
                for (w, g) in w.iter_mut().zip(g) {
                    *w -= lr * g;
                }
            }
            OptimizerKind::RmsProp { rho, eps } => {
                for ((w, g), v) in w.iter_mut().zip(g).zip(&mut self.second) {
                    *v = rho * *v + (1.0 - rho) * g * g;
                    *w -= lr * g / (libm::sqrt(*v) + eps);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as f64;
                let c1 = 1.0 - libm::pow(beta1, t);
                let c2 = 1.0 - libm::pow(beta2, t);
                for (((w, g), m), v) in w.iter_mut().zip(g).zip(&mut self.first).zip(&mut self.second) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= lr * (*m / c1) / (libm::sqrt(*v / c2) + eps);
                }
            }
        }
        theta.ensure_finite("updated parameters")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v).unwrap()
    }

    #[test]
    fn init_examples() {
        let s = OptimizerState::new(OptimizerSpec::sgd(0.1), 4).unwrap();
        assert!(s.buffers().is_empty());

        let s = OptimizerState::new(OptimizerSpec::adam(1e-3), 3).unwrap();
        assert_eq!(s.buffers(), vec![&[0.0; 3][..], &[0.0; 3][..]]);
        assert_eq!(s.steps(), 0);

        let s = OptimizerState::new(OptimizerSpec::rmsprop(1e-2), 252_501).unwrap();
        let bufs = s.buffers();
        assert_eq!(bufs.len(), 1);
        assert_eq!(bufs[0].len(), 252_501);
        assert!(bufs[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_specs() {
        assert!(OptimizerState::new(OptimizerSpec::sgd(0.0), 1).is_err());
        assert!(OptimizerState::new(OptimizerSpec::sgd(f64::NAN), 1).is_err());
        assert!(OptimizerState::new(OptimizerSpec::sgd(0.1), 0).is_err());
        let bad_rho = OptimizerSpec { kind: OptimizerKind::RmsProp { rho: 1.0, eps: 1e-8 }, learning_rate: 0.1 };
        assert!(bad_rho.validate().is_err());
        let bad_eps = OptimizerSpec { kind: OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 0.0 }, learning_rate: 0.1 };
        assert!(bad_eps.validate().is_err());
    }

    #[test]
    fn sgd_single_step() {
        let mut s = OptimizerState::new(OptimizerSpec::sgd(0.1), 1).unwrap();
        let mut theta = pv(&[1.0]);
        s.step(&mut theta, &pv(&[0.5])).unwrap();
        assert_eq!(theta.as_slice(), &[0.95]);
    }

    #[test]
    fn rmsprop_single_step_from_zero_state() {
        let spec = OptimizerSpec { kind: OptimizerKind::RmsProp { rho: 0.9, eps: 1e-8 }, learning_rate: 0.01 };
        let mut s = OptimizerState::new(spec, 1).unwrap();
        let mut theta = pv(&[0.0]);
        s.step(&mut theta, &pv(&[2.0])).unwrap();
        // -0.01 * 2 / (sqrt(0.1 * 4) + 1e-8), evaluated independently.
        assert!((theta.as_slice()[0] - -0.0316227761016838).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_learning_rate_sized() {
        // Bias correction makes the first Adam step exactly lr * g / (|g| + eps).
        let mut s = OptimizerState::new(OptimizerSpec::adam(1e-3), 2).unwrap();
        let mut theta = pv(&[0.0, 0.0]);
        s.step(&mut theta, &pv(&[4.0, -0.5])).unwrap();
        assert!((theta.as_slice()[0] + 1e-3 * 4.0 / (4.0 + 1e-8)).abs() < 1e-15);
        assert!((theta.as_slice()[1] - 1e-3 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn rejects_bad_gradient() {
        let mut s = OptimizerState::new(OptimizerSpec::sgd(0.1), 2).unwrap();
        let mut theta = pv(&[1.0, 1.0]);
        assert!(s.step(&mut theta, &pv(&[1.0])).is_err());
        assert!(s.step(&mut pv(&[1.0]), &pv(&[1.0, 1.0])).is_err());
        assert_eq!(theta.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.steps(), 0);
    }
}
