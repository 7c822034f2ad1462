//! The 2D forgetting benchmark.
//!
//! A network is trained on noisy samples of `f(x) = sin(10|x|)` with inputs
//! drawn from `U[-1, 1]^2` (the original domain), then fine-tuned on samples
//! from `U[0.8, 1.5]^2` (the new domain). The two squares only share the
//! `[0.8, 1.0]^2` corner. Errors are measured against the noise-free target
//! on a fixed uniform grid over each domain.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::mlp::{loss_mse, Activation, Architecture, Batch, Init, Mlp, Workspace};
use crate::optim::{OptimizerSpec, OptimizerState};
use crate::param::ParamVector;
use crate::profit::{run_profit_training, Phase, ProfitConfig, ProfitStepTrace};
use crate::rng::{self, RngSnapshot, StreamRng};

/// `sin(10 |x|)`.
pub fn target_function(x: [f64; 2]) -> f64 {
    libm::sin(10.0 * libm::hypot(x[0], x[1]))
}

/// Sampling square `[low, high]^2` with additive Gaussian label noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyDataConfig {
    pub low: f64,
    pub high: f64,
    pub noise_std: f64,
}

impl ToyDataConfig {
    pub const ORIGINAL: ToyDataConfig = ToyDataConfig { low: -1.0, high: 1.0, noise_std: 1.0 };
    pub const NEW: ToyDataConfig = ToyDataConfig { low: 0.8, high: 1.5, noise_std: 1.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low < self.high) {
            return Err(Error::InvalidConfig("domain bounds must be finite with low < high"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("noise_std must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x.iter().all(|&c| (self.low..=self.high).contains(&c))
    }
}

/// Draws `batch_size` points; each coordinate uniform on the domain, targets
/// `f(x) + N(0, noise_std^2)`. Per point the draws are x1, x2, then noise.
pub fn sample_batch<R: Rng + ?Sized>(config: &ToyDataConfig, rng: &mut R, batch_size: usize) -> Result<Batch> {
    config.validate()?;
    if batch_size == 0 {
        return Err(Error::InvalidBatch("batch size must be at least 1"));
    }
    let coord = Uniform::new_inclusive(config.low, config.high).map_err(|_| Error::InvalidConfig("bad domain"))?;
    let mut inputs = Vec::with_capacity(2 * batch_size);
    let mut targets = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let x = [coord.sample(rng), coord.sample(rng)];
        let noise: f64 = StandardNormal.sample(rng);
        inputs.extend_from_slice(&x);
        targets.push(target_function(x) + config.noise_std * noise);
    }
    Batch::new(2, inputs, targets)
}

/// Endless stream of batches from one random stream.
#[derive(Debug, Clone)]
pub struct BatchStream {
    config: ToyDataConfig,
    batch_size: usize,
    rng: StreamRng,
    drawn: usize,
}

impl BatchStream {
    pub fn new(config: ToyDataConfig, batch_size: usize, rng: StreamRng) -> Result<Self> {
        config.validate()?;
        if batch_size == 0 {
            return Err(Error::InvalidBatch("batch size must be at least 1"));
        }
        Ok(Self { config, batch_size, rng, drawn: 0 })
    }

    pub fn drawn(&self) -> usize {
        self.drawn
    }

    pub fn snapshot(&self) -> RngSnapshot {
        RngSnapshot::capture(&self.rng)
    }
}

impl Iterator for BatchStream {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        self.drawn += 1;
        Some(sample_batch(&self.config, &mut self.rng, self.batch_size).expect("validated at construction"))
    }
}

/// Noise-free evaluation points: a `resolution x resolution` grid spanning the
/// domain, endpoints included, with `x1` varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl EvalGrid {
    pub fn new(domain: &ToyDataConfig, resolution: usize) -> Result<Self> {
        domain.validate()?;
        if resolution < 2 {
            return Err(Error::InvalidConfig("evaluation grid needs at least 2 points per axis"));
        }
        let step = (domain.high - domain.low) / (resolution - 1) as f64;
        let axis: Vec<f64> = (0..resolution).map(|i| domain.low + step * i as f64).collect();
        let mut inputs = Vec::with_capacity(2 * resolution * resolution);
        let mut targets = Vec::with_capacity(resolution * resolution);
        for &a in &axis {
            for &b in &axis {
                inputs.extend_from_slice(&[a, b]);
                targets.push(target_function([a, b]));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.inputs.chunks_exact(2).map(|p| [p[0], p[1]])
    }

    /// MSE between `predict` and the clean target, in chunks of at most
    /// `chunk` points.
    pub fn error_with<F>(&self, mut predict: F) -> Result<f64>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let predictions = self.predictions_with(&mut predict)?;
        loss_mse(&predictions, &self.targets)
    }

    pub fn predictions_with<F>(&self, mut predict: F) -> Result<Vec<f64>>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        const CHUNK: usize = 1000;
        let mut out = Vec::with_capacity(self.len());
        for rows in self.inputs.chunks(2 * CHUNK) {
            out.extend(predict(rows)?);
        }
        Ok(out)
    }

    pub fn predictions(&self, arch: &Architecture, params: &ParamVector) -> Result<Vec<f64>> {
        let mut ws = Workspace::new();
        self.predictions_with(|rows| arch.forward(params.as_slice(), rows, &mut ws))
    }

    pub fn error(&self, arch: &Architecture, params: &ParamVector) -> Result<f64> {
        let predictions = self.predictions(arch, params)?;
        loss_mse(&predictions, &self.targets)
    }
}

pub fn evaluate_error(model: &Mlp, grid: &EvalGrid) -> Result<f64> {
    grid.error(model.architecture(), model.params())
}

/// Zeroes every gradient entry outside the output layer.
pub fn apply_head_mask(arch: &Architecture, gradient: &ParamVector) -> Result<ParamVector> {
    if gradient.len() != arch.param_count() {
        return Err(Error::WrongParamCount { expected: arch.param_count(), actual: gradient.len() });
    }
    let head = arch.head_range();
    let mut values = vec![0.0; gradient.len()];
    values[head.clone()].copy_from_slice(&gradient.as_slice()[head]);
    Ok(ParamVector::from_vec_unchecked(values))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSpec {
    pub optimizer: OptimizerSpec,
    pub steps: usize,
}

/// PROFIT settings of a plan; the reference optimizer runs at
/// `finetune lr / lr_ratio`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitSettings {
    pub n_ref: usize,
    pub lr_ratio: f64,
    pub reference: OptimizerSpec,
    pub warmup_steps: usize,
}

impl Default for ProfitSettings {
    fn default() -> Self {
        Self { n_ref: 1, lr_ratio: 100.0, reference: OptimizerSpec::sgd(1.0), warmup_steps: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Full,
    HeadOnly,
    Profit,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Full, Strategy::HeadOnly, Strategy::Profit];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::HeadOnly => "head",
            Strategy::Profit => "profit",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Strategy::Full),
            "head" | "head_only" => Some(Strategy::HeadOnly),
            "profit" => Some(Strategy::Profit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub architecture: Architecture,
    pub init: Init,
    pub original: ToyDataConfig,
    pub new: ToyDataConfig,
    pub batch_size: usize,
    pub baseline: TrainSpec,
    pub finetune: TrainSpec,
    pub profit: ProfitSettings,
    pub strategies: Vec<Strategy>,
    pub eval_resolution: usize,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            architecture: Architecture::standard(Activation::Relu),
            init: Init::FanInUniform,
            original: ToyDataConfig::ORIGINAL,
            new: ToyDataConfig::NEW,
            batch_size: 128,
            baseline: TrainSpec { optimizer: OptimizerSpec::rmsprop(1e-2), steps: 10_000 },
            finetune: TrainSpec { optimizer: OptimizerSpec::rmsprop(5e-4), steps: 1_500 },
            profit: ProfitSettings::default(),
            strategies: Strategy::ALL.to_vec(),
            eval_resolution: 100,
            seeds: vec![0, 1, 2],
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.original.validate()?;
        self.new.validate()?;
        if self.architecture.input_dim() != 2 {
            return Err(Error::InvalidConfig("the benchmark network takes 2D inputs"));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1"));
        }
        self.baseline.optimizer.validate()?;
        self.finetune.optimizer.validate()?;
        if self.strategies.contains(&Strategy::Profit) {
            if !(self.profit.lr_ratio.is_finite() && self.profit.lr_ratio > 0.0) {
                return Err(Error::InvalidConfig("lr_ratio must be positive"));
            }
            self.profit_config().validate()?;
        }
        if self.eval_resolution < 2 {
            return Err(Error::InvalidConfig("evaluation grid needs at least 2 points per axis"));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required"));
        }
        Ok(())
    }

    pub fn profit_config(&self) -> ProfitConfig {
        let main = self.finetune.optimizer;
        ProfitConfig {
            n_ref: self.profit.n_ref,
            main,
            reference: self.profit.reference.with_learning_rate(main.learning_rate / self.profit.lr_ratio),
            warmup_steps: self.profit.warmup_steps,
        }
    }

    pub fn grids(&self) -> Result<(EvalGrid, EvalGrid)> {
        Ok((EvalGrid::new(&self.original, self.eval_resolution)?, EvalGrid::new(&self.new, self.eval_resolution)?))
    }

    pub fn initial_model(&self, seed: u64) -> Mlp {
        Mlp::init(self.architecture.clone(), self.init, &mut rng::stream(seed, rng::STREAM_INIT))
    }

    pub fn baseline_stream(&self, seed: u64) -> Result<BatchStream> {
        BatchStream::new(self.original, self.batch_size, rng::stream(seed, rng::STREAM_BASELINE))
    }

    pub fn finetune_stream(&self, seed: u64) -> Result<BatchStream> {
        BatchStream::new(self.new, self.batch_size, rng::stream(seed, rng::STREAM_FINETUNE))
    }
}

/// Progress report passed to training callbacks.
#[derive(Debug)]
pub struct Progress<'a> {
    pub phase: Phase,
    /// 1-based update count within the phase.
    pub step: usize,
    pub params: &'a ParamVector,
    /// Loss of the last batch, when the update used a single batch.
    pub batch_loss: Option<f64>,
    pub trace: Option<&'a ProfitStepTrace>,
}

/// Callback invoked every `every` updates (`every == 0` disables it).
pub struct Monitor<'a> {
    pub every: usize,
    pub callback: &'a mut dyn FnMut(Progress<'_>) -> Result<()>,
}

impl Monitor<'_> {
    fn due(&self, step: usize) -> bool {
        self.every > 0 && step.is_multiple_of(self.every)
    }
}

/// Plain optimizer training, optionally restricted to the output layer.
#[allow(clippy::too_many_arguments)]
pub fn train_plain(
    arch: &Architecture,
    params: &mut ParamVector,
    optimizer: OptimizerSpec,
    steps: usize,
    batches: &mut impl Iterator<Item = Batch>,
    head_only: bool,
    mut monitor: Option<Monitor<'_>>,
) -> Result<OptimizerState> {
    let mut state = OptimizerState::new(optimizer, arch.param_count())?;
    let mut ws = Workspace::new();
    let mut grad = vec![0.0; arch.param_count()];
    let head = arch.head_range();
    for step in 1..=steps {
        let batch = batches.next().ok_or(Error::BatchesExhausted { required: 1, available: 0 })?;
        let loss = arch.loss_and_grad(params.as_slice(), &batch, &mut ws, &mut grad)?;
        if head_only {
            grad[..head.start].fill(0.0);
        }
        let g = ParamVector::from_vec_unchecked(core::mem::take(&mut grad));
        state.step(params, &g)?;
        grad = g.into_vec();
        if let Some(m) = monitor.as_mut() {
            if m.due(step) {
                (m.callback)(Progress { phase: Phase::Plain, step, params, batch_loss: Some(loss), trace: None })?;
            }
        }
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub model: Mlp,
    pub rng: RngSnapshot,
    pub steps: usize,
}

/// Trains a freshly initialized network on the original domain.
pub fn train_baseline(plan: &ExperimentPlan, seed: u64, monitor: Option<Monitor<'_>>) -> Result<BaselineOutcome> {
    plan.validate()?;
    let model = plan.initial_model(seed);
    let arch = model.architecture().clone();
    let mut params = model.into_params();
    let mut stream = plan.baseline_stream(seed)?;
    train_plain(&arch, &mut params, plan.baseline.optimizer, plan.baseline.steps, &mut stream, false, monitor)?;
    Ok(BaselineOutcome { model: Mlp::unflatten(arch, params)?, rng: stream.snapshot(), steps: plan.baseline.steps })
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: Mlp,
    pub rng: RngSnapshot,
    /// Main-optimizer updates, warmup included.
    pub steps: usize,
    pub batches_consumed: usize,
    /// Empty unless the strategy is PROFIT.
    pub traces: Vec<ProfitStepTrace>,
}

/// Fine-tunes `model` on the new domain with `strategy`, drawing batches from
/// the seed's fine-tuning stream (every strategy sees the same stream).
pub fn finetune(
    plan: &ExperimentPlan,
    model: &Mlp,
    strategy: Strategy,
    seed: u64,
    monitor: Option<Monitor<'_>>,
) -> Result<FinetuneOutcome> {
    plan.validate()?;
    if model.architecture() != &plan.architecture {
        return Err(Error::InvalidConfig("model architecture differs from the plan"));
    }
    let arch = model.architecture().clone();
    let mut params = model.flatten();
    let mut stream = plan.finetune_stream(seed)?;
    let steps = plan.finetune.steps;
    let mut traces = Vec::new();
    match strategy {
        Strategy::Full | Strategy::HeadOnly => {
            train_plain(&arch, &mut params, plan.finetune.optimizer, steps, &mut stream, strategy == Strategy::HeadOnly, monitor)?;
        }
        Strategy::Profit => {
            let mut ws = Workspace::new();
            let n = arch.param_count();
            let grad_fn = |theta: &ParamVector, batch: &Batch| {
                let mut g = vec![0.0; n];
                arch.loss_and_grad(theta.as_slice(), batch, &mut ws, &mut g)?;
                Ok(ParamVector::from_vec_unchecked(g))
            };
            let (every, mut callback) = match monitor {
                Some(m) => (m.every, Some(m.callback)),
                None => (0, None),
            };
            let run = run_profit_training(&mut params, plan.profit_config(), steps, &mut stream, grad_fn, every, |c| {
                match callback.as_mut() {
                    Some(cb) => cb(Progress { phase: c.phase, step: c.step, params: c.theta, batch_loss: None, trace: c.trace }),
                    None => Ok(()),
                }
            })?;
            traces = run.traces;
        }
    }
    let warmup = if strategy == Strategy::Profit { plan.profit.warmup_steps } else { 0 };
    Ok(FinetuneOutcome {
        model: Mlp::unflatten(arch, params)?,
        rng: stream.snapshot(),
        steps: steps + warmup,
        batches_consumed: stream.drawn(),
        traces,
    })
}

/// Original- and new-domain error of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainErrors {
    pub original: f64,
    pub new: f64,
}

pub fn evaluate_domains(model: &Mlp, grids: &(EvalGrid, EvalGrid)) -> Result<DomainErrors> {
    Ok(DomainErrors { original: evaluate_error(model, &grids.0)?, new: evaluate_error(model, &grids.1)? })
}
