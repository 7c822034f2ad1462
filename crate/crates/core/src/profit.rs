//! The PROFIT optimizer step.
//!
//! One outer step saves the weights, lets the reference optimizer wander for
//! `n_ref` batches, measures the displacement `delta`, queries one more
//! gradient `g` at the displaced point, removes from `g` its component along
//! `delta` when the two conflict (`<delta, g> < 0`), restores the saved
//! weights and finally lets the main optimizer take a single step with the
//! resulting gradient.
//!
//! Preconditions the code cannot check: the starting weights should come from
//! a converged model, and the fine-tuning data should be close in distribution
//! to the data the model converged on. Started from random weights the
//! projection mostly removes useful signal.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::optim::{OptimizerSpec, OptimizerState};
use crate::param::{orthogonal_reject, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitConfig {
    /// Reference steps per outer step.
    pub n_ref: usize,
    pub main: OptimizerSpec,
    pub reference: OptimizerSpec,
    /// Plain main-optimizer steps taken before the PROFIT logic engages.
    pub warmup_steps: usize,
}

impl ProfitConfig {
    /// `n_ref = 1`, SGD reference at `main.learning_rate / lr_ratio`, no warmup.
    pub fn new(main: OptimizerSpec, lr_ratio: f64) -> Self {
        Self { n_ref: 1, main, reference: OptimizerSpec::sgd(main.learning_rate / lr_ratio), warmup_steps: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ref == 0 {
            return Err(Error::InvalidConfig("n_ref must be at least 1"));
        }
        self.main.validate()?;
        self.reference.validate()
    }

    /// Batches one outer step draws from the stream.
    pub fn batches_per_step(&self) -> usize {
        self.n_ref + 1
    }
}

/// What happened inside one outer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitStepTrace {
    /// `<delta, g>`.
    pub omega: f64,
    /// The rejection was applied to `g`.
    pub projected: bool,
    /// `omega < 0` but `delta` was numerically zero, so `g` passed through.
    pub degenerate: bool,
    pub delta_norm: f64,
    /// Norm of `g` before any projection.
    pub g_norm: f64,
    /// Norm of the gradient handed to the main optimizer.
    pub update_norm: f64,
    pub batches_consumed: usize,
}

/// PROFIT wrapper around a main and a reference optimizer.
///
/// Both optimizer states persist across outer steps. Restoring the weights
/// does not roll back the main optimizer's accumulators.
#[derive(Debug, Clone)]
pub struct ProfitOptimizer {
    config: ProfitConfig,
    main: OptimizerState,
    reference: OptimizerState,
    saved: ParamVector,
}

impl ProfitOptimizer {
    pub fn new(config: ProfitConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            main: OptimizerState::new(config.main, dim)?,
            reference: OptimizerState::new(config.reference, dim)?,
            saved: ParamVector::zeros(dim),
        })
    }

    /// Resumes from existing optimizer states.
    pub fn with_states(config: ProfitConfig, main: OptimizerState, reference: OptimizerState) -> Result<Self> {
        config.validate()?;
        if main.dim() != reference.dim() {
            return Err(Error::DimensionMismatch { left: main.dim(), right: reference.dim() });
        }
        let dim = main.dim();
        Ok(Self { config, main, reference, saved: ParamVector::zeros(dim) })
    }

    pub fn config(&self) -> &ProfitConfig {
        &self.config
    }

    pub fn main_state(&self) -> &OptimizerState {
        &self.main
    }

    pub fn reference_state(&self) -> &OptimizerState {
        &self.reference
    }

    pub fn into_states(self) -> (OptimizerState, OptimizerState) {
        (self.main, self.reference)
    }

    /// One outer PROFIT step, updating `theta` in place.
    ///
    /// On error `theta` is put back to its value at entry; the reference
    /// optimizer may already have advanced.
    pub fn step<B, I, F>(&mut self, theta: &mut ParamVector, batches: &mut I, grad_fn: &mut F) -> Result<ProfitStepTrace>
    where
        I: Iterator<Item = B>,
        F: FnMut(&ParamVector, &B) -> Result<ParamVector>,
    {
        let (update, trace) = self.explore(theta, batches, grad_fn)?;
        self.main.step(theta, &update)?;
        Ok(trace)
    }

    /// Plain main-optimizer step on one batch (warmup).
    pub fn warmup_step<B, I, F>(&mut self, theta: &mut ParamVector, batches: &mut I, grad_fn: &mut F) -> Result<()>
    where
        I: Iterator<Item = B>,
        F: FnMut(&ParamVector, &B) -> Result<ParamVector>,
    {
        let batch = batches.next().ok_or(Error::BatchesExhausted { required: 1, available: 0 })?;
        let g = grad_fn(theta, &batch)?;
        self.main.step(theta, &g)
    }

    /// Everything up to (not including) the main update. Returns the gradient
    /// for the main optimizer with `theta` restored to its entry value.
    fn explore<B, I, F>(
        &mut self,
        theta: &mut ParamVector,
        batches: &mut I,
        grad_fn: &mut F,
    ) -> Result<(ParamVector, ProfitStepTrace)>
    where
        I: Iterator<Item = B>,
        F: FnMut(&ParamVector, &B) -> Result<ParamVector>,
    {
        self.saved.assign(theta)?;
        let result = self.probe(theta, batches, grad_fn);
        theta.assign(&self.saved)?;
        result
    }

    fn probe<B, I, F>(&mut self, theta: &mut ParamVector, batches: &mut I, grad_fn: &mut F) -> Result<(ParamVector, ProfitStepTrace)>
    where
        I: Iterator<Item = B>,
        F: FnMut(&ParamVector, &B) -> Result<ParamVector>,
    {
        let required = self.config.batches_per_step();
        let mut next = |consumed: usize| batches.next().ok_or(Error::BatchesExhausted { required, available: consumed });

        for i in 0..self.config.n_ref {
            let batch = next(i)?;
            let g = grad_fn(theta, &batch)?;
            self.reference.step(theta, &g)?;
        }
        let delta = theta.sub(&self.saved)?;
        let batch = next(self.config.n_ref)?;
        let g = grad_fn(theta, &batch)?;

        let omega = delta.dot(&g)?;
        let delta_norm = delta.norm();
        let g_norm = g.norm();
        let (update, projected, degenerate) = if omega < 0.0 {
            let r = orthogonal_reject(&g, &delta)?;
            (r.vector, !r.degenerate, r.degenerate)
        } else {
            (g, false, false)
        };
        let trace = ProfitStepTrace {
            omega,
            projected,
            degenerate,
            delta_norm,
            g_norm,
            update_norm: update.norm(),
            batches_consumed: required,
        };
        Ok((update, trace))
    }
}

/// Where a training-loop callback fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Ordinary optimizer training, outside any PROFIT run.
    Plain,
    Warmup,
    Profit,
}

/// Passed to the evaluation hook of [`run_profit_training`].
#[derive(Debug)]
pub struct Checkpoint<'a> {
    pub phase: Phase,
    /// 1-based count of updates in this phase.
    pub step: usize,
    pub theta: &'a ParamVector,
    pub trace: Option<&'a ProfitStepTrace>,
}

/// Result of [`run_profit_training`].
#[derive(Debug, Clone)]
pub struct ProfitRun {
    pub traces: Vec<ProfitStepTrace>,
    pub optimizer: ProfitOptimizer,
}

impl ProfitRun {
    pub fn batches_consumed(&self) -> usize {
        self.optimizer.config.warmup_steps + self.traces.iter().map(|t| t.batches_consumed).sum::<usize>()
    }

    pub fn projected_steps(&self) -> usize {
        self.traces.iter().filter(|t| t.projected).count()
    }
}

/// Warmup followed by `n_steps` PROFIT steps. `hook` runs after every
/// `eval_every`-th update of each phase (`eval_every == 0` disables it).
#[allow(clippy::too_many_arguments)]
pub fn run_profit_training<B, I, F, H>(
    theta: &mut ParamVector,
    config: ProfitConfig,
    n_steps: usize,
    batches: &mut I,
    mut grad_fn: F,
    eval_every: usize,
    mut hook: H,
) -> Result<ProfitRun>
where
    I: Iterator<Item = B>,
    F: FnMut(&ParamVector, &B) -> Result<ParamVector>,
    H: FnMut(Checkpoint<'_>) -> Result<()>,
{
    let mut optimizer = ProfitOptimizer::new(config, theta.len())?;
    let due = |step: usize| eval_every > 0 && step.is_multiple_of(eval_every);

    for step in 1..=config.warmup_steps {
        optimizer.warmup_step(theta, batches, &mut grad_fn)?;
        if due(step) {
            hook(Checkpoint { phase: Phase::Warmup, step, theta, trace: None })?;
        }
    }
    let mut traces = Vec::with_capacity(n_steps);
    for step in 1..=n_steps {
        let trace = optimizer.step(theta, batches, &mut grad_fn)?;
        traces.push(trace);
        if due(step) {
            hook(Checkpoint { phase: Phase::Profit, step, theta, trace: traces.last() })?;
        }
    }
    Ok(ProfitRun { traces, optimizer })
}
