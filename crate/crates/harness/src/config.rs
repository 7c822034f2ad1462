//! Flat `key = value` run configuration.
//!
//! Every key has a default; a config file only lists what it changes. Lines
//! starting with `#` are comments. Unknown and repeated keys are errors.
//! [`RunConfig::echo`] prints every key, defaults included, and its SHA-256
//! is the digest stored in checkpoints.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use profit_core::mlp::{Activation, Architecture, Init};
use profit_core::optim::{OptimizerKind, OptimizerSpec};
use profit_core::toy::{ExperimentPlan, ProfitSettings, Strategy, ToyDataConfig, TrainSpec};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`: {reason}")]
    BadValue { line: usize, key: String, value: String, reason: String },
    #[error(transparent)]
    Invalid(#[from] profit_core::Error),
}

/// Which PROFIT hyperparameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NRef,
    LrRatio,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NRef => "n_ref",
            SweepAxis::LrRatio => "lr_ratio",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "n_ref" => Some(SweepAxis::NRef),
            "lr_ratio" => Some(SweepAxis::LrRatio),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plan: ExperimentPlan,
    /// Hidden width of both hidden layers.
    pub hidden: usize,
    pub activation: Activation,
    /// Shared by every RMSProp / Adam instance of the run.
    pub rmsprop_rho: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub optimizer_eps: f64,
    /// Default for `finetune` when `--strategy` is absent.
    pub strategy: Strategy,
    /// Metrics cadence in steps; 0 writes only the final row.
    pub eval_every: usize,
    pub out_dir: PathBuf,
    pub sweep_n_ref: Vec<usize>,
    pub sweep_lr_ratio: Vec<f64>,
    /// Record wall-clock times in result tables. Off makes tables bitwise
    /// reproducible.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let plan = ExperimentPlan::default();
        Self {
            hidden: profit_core::mlp::STANDARD_HIDDEN,
            activation: plan.architecture.activation(),
            plan,
            rmsprop_rho: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            optimizer_eps: 1e-8,
            strategy: Strategy::Profit,
            eval_every: 500,
            out_dir: PathBuf::from("runs"),
            sweep_n_ref: vec![1, 2, 5],
            sweep_lr_ratio: vec![10.0, 100.0, 1000.0, 10000.0],
            timing: true,
        }
    }
}

const KEYS: &[&str] = &[
    "activation",
    "hidden",
    "init",
    "original_low",
    "original_high",
    "original_noise_std",
    "new_low",
    "new_high",
    "new_noise_std",
    "batch_size",
    "baseline_optimizer",
    "baseline_lr",
    "baseline_steps",
    "finetune_optimizer",
    "finetune_lr",
    "finetune_steps",
    "rmsprop_rho",
    "adam_beta1",
    "adam_beta2",
    "optimizer_eps",
    "n_ref",
    "lr_ratio",
    "reference_optimizer",
    "warmup_steps",
    "strategy",
    "strategies",
    "seeds",
    "eval_resolution",
    "eval_every",
    "out_dir",
    "sweep_n_ref",
    "sweep_lr_ratio",
    "timing",
];

/// Optimizer family before the shared hyperparameters are attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Sgd,
    RmsProp,
    Adam,
}

fn family(kind: OptimizerKind) -> Family {
    match kind {
        OptimizerKind::Sgd => Family::Sgd,
        OptimizerKind::RmsProp { .. } => Family::RmsProp,
        OptimizerKind::Adam { .. } => Family::Adam,
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s {
        "sgd" => Ok(Family::Sgd),
        "rmsprop" => Ok(Family::RmsProp),
        "adam" => Ok(Family::Adam),
        _ => Err("expected sgd, rmsprop or adam".into()),
    }
}

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|p| parse(p.trim())).collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn join<T: std::fmt::Debug>(items: &[T]) -> String {
    items.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .ok_or_else(|| ConfigError::Syntax { line: line_no, text: trimmed.to_owned() })?;
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey { line: line_no, key: key.to_owned() });
            };
            if seen.contains(&known) {
                return Err(ConfigError::Duplicate { line: line_no, key: key.to_owned() });
            }
            seen.push(known);
            raw.set(known, value).map_err(|reason| ConfigError::BadValue {
                line: line_no,
                key: key.to_owned(),
                value: value.to_owned(),
                reason,
            })?;
        }
        let config = raw.build();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hidden == 0 {
            return Err(profit_core::Error::InvalidConfig("hidden width must be at least 1").into());
        }
        self.plan.validate()?;
        if self.sweep_n_ref.is_empty() || self.sweep_n_ref.contains(&0) {
            return Err(profit_core::Error::InvalidConfig("sweep_n_ref needs positive values").into());
        }
        if self.sweep_lr_ratio.is_empty() || self.sweep_lr_ratio.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(profit_core::Error::InvalidConfig("sweep_lr_ratio needs positive values").into());
        }
        Ok(())
    }

    /// Every key with its effective value, in a fixed order. Parsing the echo
    /// gives back an equal config.
    pub fn echo(&self) -> String {
        let p = &self.plan;
        let fam = |spec: &OptimizerSpec| match family(spec.kind) {
            Family::Sgd => "sgd",
            Family::RmsProp => "rmsprop",
            Family::Adam => "adam",
        };
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("activation", self.activation.name().into());
        put("hidden", self.hidden.to_string());
        put("init", p.init.name().into());
        put("original_low", format!("{:?}", p.original.low));
        put("original_high", format!("{:?}", p.original.high));
        put("original_noise_std", format!("{:?}", p.original.noise_std));
        put("new_low", format!("{:?}", p.new.low));
        put("new_high", format!("{:?}", p.new.high));
        put("new_noise_std", format!("{:?}", p.new.noise_std));
        put("batch_size", p.batch_size.to_string());
        put("baseline_optimizer", fam(&p.baseline.optimizer).into());
        put("baseline_lr", format!("{:?}", p.baseline.optimizer.learning_rate));
        put("baseline_steps", p.baseline.steps.to_string());
        put("finetune_optimizer", fam(&p.finetune.optimizer).into());
        put("finetune_lr", format!("{:?}", p.finetune.optimizer.learning_rate));
        put("finetune_steps", p.finetune.steps.to_string());
        put("rmsprop_rho", format!("{:?}", self.rmsprop_rho));
        put("adam_beta1", format!("{:?}", self.adam_beta1));
        put("adam_beta2", format!("{:?}", self.adam_beta2));
        put("optimizer_eps", format!("{:?}", self.optimizer_eps));
        put("n_ref", p.profit.n_ref.to_string());
        put("lr_ratio", format!("{:?}", p.profit.lr_ratio));
        put("reference_optimizer", fam(&p.profit.reference).into());
        put("warmup_steps", p.profit.warmup_steps.to_string());
        put("strategy", self.strategy.name().into());
        put("strategies", p.strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
        put("seeds", join(&p.seeds));
        put("eval_resolution", p.eval_resolution.to_string());
        put("eval_every", self.eval_every.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("sweep_n_ref", join(&self.sweep_n_ref));
        put("sweep_lr_ratio", join(&self.sweep_lr_ratio));
        put("timing", self.timing.to_string());
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.echo().as_bytes()).into()
    }

    /// First configured seed, used by single-run commands without `--seed`.
    pub fn default_seed(&self) -> u64 {
        self.plan.seeds[0]
    }
}

/// Parsed values before they are assembled into core types.
struct RawConfig {
    activation: Activation,
    hidden: usize,
    init: Init,
    original: ToyDataConfig,
    new: ToyDataConfig,
    batch_size: usize,
    baseline: (Family, f64, usize),
    finetune: (Family, f64, usize),
    rmsprop_rho: f64,
    adam_beta1: f64,
    adam_beta2: f64,
    optimizer_eps: f64,
    n_ref: usize,
    lr_ratio: f64,
    reference: Family,
    warmup_steps: usize,
    strategy: Strategy,
    strategies: Vec<Strategy>,
    seeds: Vec<u64>,
    eval_resolution: usize,
    eval_every: usize,
    out_dir: PathBuf,
    sweep_n_ref: Vec<usize>,
    sweep_lr_ratio: Vec<f64>,
    timing: bool,
}

impl Default for RawConfig {
    fn default() -> Self {
        let c = RunConfig::default();
        let p = &c.plan;
        let train = |t: &TrainSpec| (family(t.optimizer.kind), t.optimizer.learning_rate, t.steps);
        Self {
            activation: c.activation,
            hidden: c.hidden,
            init: p.init,
            original: p.original,
            new: p.new,
            batch_size: p.batch_size,
            baseline: train(&p.baseline),
            finetune: train(&p.finetune),
            rmsprop_rho: c.rmsprop_rho,
            adam_beta1: c.adam_beta1,
            adam_beta2: c.adam_beta2,
            optimizer_eps: c.optimizer_eps,
            n_ref: p.profit.n_ref,
            lr_ratio: p.profit.lr_ratio,
            reference: family(p.profit.reference.kind),
            warmup_steps: p.profit.warmup_steps,
            strategy: c.strategy,
            strategies: p.strategies.clone(),
            seeds: p.seeds.clone(),
            eval_resolution: p.eval_resolution,
            eval_every: c.eval_every,
            out_dir: c.out_dir,
            sweep_n_ref: c.sweep_n_ref,
            sweep_lr_ratio: c.sweep_lr_ratio,
            timing: c.timing,
        }
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_name(s).ok_or_else(|| "expected full, head or profit".into())
}

impl RawConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "activation" => self.activation = Activation::from_name(v).ok_or("expected relu, tanh or identity")?,
            "hidden" => self.hidden = parse(v)?,
            "init" => self.init = Init::from_name(v).ok_or("expected fan_in_uniform or glorot_uniform")?,
            "original_low" => self.original.low = parse(v)?,
            "original_high" => self.original.high = parse(v)?,
            "original_noise_std" => self.original.noise_std = parse(v)?,
            "new_low" => self.new.low = parse(v)?,
            "new_high" => self.new.high = parse(v)?,
            "new_noise_std" => self.new.noise_std = parse(v)?,
            "batch_size" => self.batch_size = parse(v)?,
            "baseline_optimizer" => self.baseline.0 = parse_family(v)?,
            "baseline_lr" => self.baseline.1 = parse(v)?,
            "baseline_steps" => self.baseline.2 = parse(v)?,
            "finetune_optimizer" => self.finetune.0 = parse_family(v)?,
            "finetune_lr" => self.finetune.1 = parse(v)?,
            "finetune_steps" => self.finetune.2 = parse(v)?,
            "rmsprop_rho" => self.rmsprop_rho = parse(v)?,
            "adam_beta1" => self.adam_beta1 = parse(v)?,
            "adam_beta2" => self.adam_beta2 = parse(v)?,
            "optimizer_eps" => self.optimizer_eps = parse(v)?,
            "n_ref" => self.n_ref = parse(v)?,
            "lr_ratio" => self.lr_ratio = parse(v)?,
            "reference_optimizer" => self.reference = parse_family(v)?,
            "warmup_steps" => self.warmup_steps = parse(v)?,
            "strategy" => self.strategy = parse_strategy(v)?,
            "strategies" => {
                self.strategies = v.split(',').map(|s| parse_strategy(s.trim())).collect::<Result<_, _>>()?;
            }
            "seeds" => self.seeds = parse_list(v)?,
            "eval_resolution" => self.eval_resolution = parse(v)?,
            "eval_every" => self.eval_every = parse(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "sweep_n_ref" => self.sweep_n_ref = parse_list(v)?,
            "sweep_lr_ratio" => self.sweep_lr_ratio = parse_list(v)?,
            "timing" => self.timing = parse_bool(v)?,
            _ => unreachable!("key table and setter disagree on `{key}`"),
        }
        Ok(())
    }

    fn spec(&self, family: Family, learning_rate: f64) -> OptimizerSpec {
        let kind = match family {
            Family::Sgd => OptimizerKind::Sgd,
            Family::RmsProp => OptimizerKind::RmsProp { rho: self.rmsprop_rho, eps: self.optimizer_eps },
            Family::Adam => OptimizerKind::Adam { beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.optimizer_eps },
        };
        OptimizerSpec { kind, learning_rate }
    }

    fn build(self) -> RunConfig {
        let plan = ExperimentPlan {
            architecture: Architecture::with_hidden(self.hidden.max(1), self.activation),
            init: self.init,
            original: self.original,
            new: self.new,
            batch_size: self.batch_size,
            baseline: TrainSpec { optimizer: self.spec(self.baseline.0, self.baseline.1), steps: self.baseline.2 },
            finetune: TrainSpec { optimizer: self.spec(self.finetune.0, self.finetune.1), steps: self.finetune.2 },
            profit: ProfitSettings {
                n_ref: self.n_ref,
                lr_ratio: self.lr_ratio,
                // The learning rate is derived from finetune_lr / lr_ratio.
                reference: self.spec(self.reference, 1.0),
                warmup_steps: self.warmup_steps,
            },
            strategies: self.strategies,
            eval_resolution: self.eval_resolution,
            seeds: self.seeds,
        };
        RunConfig {
            plan,
            hidden: self.hidden,
            activation: self.activation,
            rmsprop_rho: self.rmsprop_rho,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            optimizer_eps: self.optimizer_eps,
            strategy: self.strategy,
            eval_every: self.eval_every,
            out_dir: self.out_dir,
            sweep_n_ref: self.sweep_n_ref,
            sweep_lr_ratio: self.sweep_lr_ratio,
            timing: self.timing,
        }
    }
}
