//! Multi-seed experiments and ablation sweeps over the toy benchmark.
//!
//! Seeds and sweep cells are independent tasks and fan out to a rayon pool
//! whose size is capped by `PROFIT_THREADS`. Every task draws from its own
//! seeded streams, so results do not depend on scheduling.

use std::time::Instant;

use anyhow::{Context, Result};
use profit_core::mlp::Mlp;
use profit_core::profit::Phase;
use profit_core::toy::{self, evaluate_domains, BaselineOutcome, EvalGrid, FinetuneOutcome, Monitor, Progress, Strategy};
use rayon::prelude::*;

use crate::config::{RunConfig, SweepAxis};
use crate::table::{MetricsRow, ResultRow, ResultsTable, SweepRow, SweepTable};

pub const THREADS_ENV: &str = "PROFIT_THREADS";

/// Worker pool sized by `PROFIT_THREADS` (default: all cores).
pub fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().with_context(|| format!("{THREADS_ENV}={raw} is not a thread count"))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().context("building worker pool")
}

fn phase_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Plain => "train",
        Phase::Warmup => "warmup",
        Phase::Profit => "profit",
    }
}

fn seconds(start: Instant, timing: bool) -> f64 {
    if timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Evaluates both domains every `config.eval_every` updates.
struct Recorder<'a> {
    config: &'a RunConfig,
    grids: &'a (EvalGrid, EvalGrid),
    rows: Vec<MetricsRow>,
}

impl<'a> Recorder<'a> {
    fn new(config: &'a RunConfig, grids: &'a (EvalGrid, EvalGrid)) -> Self {
        Self { config, grids, rows: Vec::new() }
    }

    fn record(&mut self, p: Progress<'_>) -> profit_core::Result<()> {
        let arch = &self.config.plan.architecture;
        self.rows.push(MetricsRow {
            phase: phase_name(p.phase),
            step: p.step,
            batch_loss: p.batch_loss,
            original_error: self.grids.0.error(arch, p.params)?,
            new_error: self.grids.1.error(arch, p.params)?,
        });
        Ok(())
    }
}

/// Baseline training with per-cadence metrics.
pub fn train_baseline(config: &RunConfig, seed: u64) -> Result<(BaselineOutcome, Vec<MetricsRow>)> {
    let grids = config.plan.grids()?;
    let mut rec = Recorder::new(config, &grids);
    let mut cb = |p: Progress<'_>| rec.record(p);
    let monitor = Monitor { every: config.eval_every, callback: &mut cb };
    let out = toy::train_baseline(&config.plan, seed, Some(monitor))?;
    Ok((out, rec.rows))
}

/// Fine-tuning with per-cadence metrics.
pub fn finetune(config: &RunConfig, model: &Mlp, strategy: Strategy, seed: u64) -> Result<(FinetuneOutcome, Vec<MetricsRow>)> {
    let grids = config.plan.grids()?;
    let mut rec = Recorder::new(config, &grids);
    let mut cb = |p: Progress<'_>| rec.record(p);
    let monitor = Monitor { every: config.eval_every, callback: &mut cb };
    let out = toy::finetune(&config.plan, model, strategy, seed, Some(monitor))?;
    Ok((out, rec.rows))
}

struct TrainedBaseline {
    seed: u64,
    model: Mlp,
    row: ResultRow,
}

fn baselines(config: &RunConfig, grids: &(EvalGrid, EvalGrid)) -> Result<Vec<TrainedBaseline>> {
    config.plan.seeds.par_iter().map(|&seed| {
        let start = Instant::now();
        let out = toy::train_baseline(&config.plan, seed, None)?;
        let wall = seconds(start, config.timing);
        let e = evaluate_domains(&out.model, grids)?;
        let row = ResultRow {
            strategy: "baseline".into(),
            seed,
            original_error: e.original,
            new_error: e.new,
            steps: out.steps as u64,
            wall_time_s: wall,
        };
        Ok(TrainedBaseline { seed, model: out.model, row })
    })
    .collect()
}

/// Baseline plus every configured strategy for every seed.
///
/// Rows come out grouped by seed: the baseline first, then the strategies in
/// configuration order.
pub fn run_experiment(config: &RunConfig) -> Result<ResultsTable> {
    config.validate()?;
    let grids = config.plan.grids()?;
    pool()?.install(|| {
        let bases = baselines(config, &grids)?;
        let cells: Vec<(&TrainedBaseline, Strategy)> =
            bases.iter().flat_map(|b| config.plan.strategies.iter().map(move |&s| (b, s))).collect();
        let tuned: Vec<ResultRow> = cells
            .par_iter()
            .map(|&(b, strategy)| {
                let start = Instant::now();
                let out = toy::finetune(&config.plan, &b.model, strategy, b.seed, None)?;
                let wall = seconds(start, config.timing);
                let e = evaluate_domains(&out.model, &grids)?;
                Ok(ResultRow {
                    strategy: strategy.name().into(),
                    seed: b.seed,
                    original_error: e.original,
                    new_error: e.new,
                    steps: out.steps as u64,
                    wall_time_s: wall,
                })
            })
            .collect::<Result<_>>()?;
        let per_seed = config.plan.strategies.len();
        let mut rows = Vec::with_capacity(bases.len() * (per_seed + 1));
        for (b, chunk) in bases.iter().zip(tuned.chunks(per_seed.max(1))) {
            rows.push(b.row.clone());
            rows.extend_from_slice(chunk);
        }
        Ok(ResultsTable { rows })
    })
}

/// PROFIT fine-tuning for every value on `axis` and every seed, all cells
/// starting from the same per-seed baselines.
pub fn run_ablation_sweep(config: &RunConfig, axis: SweepAxis) -> Result<SweepTable> {
    config.validate()?;
    let values: Vec<f64> = match axis {
        SweepAxis::NRef => config.sweep_n_ref.iter().map(|&n| n as f64).collect(),
        SweepAxis::LrRatio => config.sweep_lr_ratio.clone(),
    };
    let grids = config.plan.grids()?;
    pool()?.install(|| {
        let bases = baselines(config, &grids)?;
        let cells: Vec<(f64, &TrainedBaseline)> = values.iter().flat_map(|&v| bases.iter().map(move |b| (v, b))).collect();
        cells
            .par_iter()
            .map(|&(value, b)| {
                let mut plan = config.plan.clone();
                match axis {
                    SweepAxis::NRef => plan.profit.n_ref = value as usize,
                    SweepAxis::LrRatio => plan.profit.lr_ratio = value,
                }
                let start = Instant::now();
                let out = toy::finetune(&plan, &b.model, Strategy::Profit, b.seed, None)?;
                let wall = seconds(start, config.timing);
                let e = evaluate_domains(&out.model, &grids)?;
                Ok(SweepRow {
                    axis: axis.name().into(),
                    value,
                    strategy: Strategy::Profit.name().into(),
                    seed: b.seed,
                    original_error: e.original,
                    new_error: e.new,
                    steps: out.steps as u64,
                    batches_consumed: out.batches_consumed as u64,
                    wall_time_s: wall,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|rows| SweepTable { rows })
    })
}
