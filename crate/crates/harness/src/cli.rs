//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage, configuration and input-file
//! problems, 2 for failures during computation or while writing outputs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use profit_core::toy::{EvalGrid, Strategy};

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, SweepAxis};
use crate::experiment;
use crate::table::{self, write_atomic};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "profit", version, about = "Proximal fine-tuning experiments on the 2D sin(10|x|) benchmark")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network on the original domain and save a checkpoint.
    TrainBaseline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fine-tune a checkpoint on the new domain.
    Finetune {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print a checkpoint's grid error on one domain and dump its predictions.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "original")]
        domain: DomainArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// PROFIT ablation over n_ref or the learning-rate ratio.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Baseline plus every fine-tuning strategy over all configured seeds.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Full,
    Head,
    Profit,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Full => Strategy::Full,
            StrategyArg::Head => Strategy::HeadOnly,
            StrategyArg::Profit => Strategy::Profit,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DomainArg {
    Original,
    New,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    #[value(name = "n_ref")]
    NRef,
    #[value(name = "lr_ratio")]
    LrRatio,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::NRef => SweepAxis::NRef,
            AxisArg::LrRatio => SweepAxis::LrRatio,
        }
    }
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_USAGE, error: e.into() })
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: EXIT_RUNTIME, error: e.into() })
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).usage(),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(config: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = flag.unwrap_or_else(|| config.out_dir.clone());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display())).runtime()?;
    Ok(dir)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(path, bytes).runtime()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::TrainBaseline { config, seed, out_dir: dir } => {
            let config = load_config(config.as_deref())?;
            let seed = seed.unwrap_or(config.default_seed());
            let dir = out_dir(&config, dir)?;
            let (out, metrics) = experiment::train_baseline(&config, seed).runtime()?;
            let ckpt = Checkpoint { model: out.model, rng: out.rng, steps: out.steps as u64, config_digest: config.digest() };
            let stem = format!("baseline_seed{seed}");
            ckpt.save(&dir.join(format!("{stem}.ckpt"))).runtime()?;
            write(&dir.join(format!("{stem}_metrics.csv")), &table::metrics_csv(&metrics).runtime()?)?;
            write(&dir.join("config.txt"), config.echo().as_bytes())?;
            report(&config, &ckpt)
        }
        Command::Finetune { config, checkpoint, strategy, seed, out_dir: dir } => {
            let config = load_config(config.as_deref())?;
            let strategy = strategy.map(Strategy::from).unwrap_or(config.strategy);
            let seed = seed.unwrap_or(config.default_seed());
            let base = Checkpoint::load(&checkpoint).usage()?;
            if base.model.architecture() != &config.plan.architecture {
                return Err(anyhow!(
                    "checkpoint architecture {:?} ({}) does not match configured {:?} ({})",
                    base.model.architecture().dims(),
                    base.model.architecture().activation().name(),
                    config.plan.architecture.dims(),
                    config.plan.architecture.activation().name(),
                ))
                .usage();
            }
            if strategy == Strategy::Profit && base.steps == 0 {
                eprintln!(
                    "warning: checkpoint has never been trained; PROFIT assumes a converged starting model \
                     and from random weights it mostly discards the useful part of each gradient"
                );
            }
            let dir = out_dir(&config, dir)?;
            let (out, metrics) = experiment::finetune(&config, &base.model, strategy, seed).runtime()?;
            let stem = format!("{}_seed{seed}", strategy.name());
            let ckpt = Checkpoint {
                model: out.model,
                rng: out.rng,
                steps: base.steps + out.steps as u64,
                config_digest: config.digest(),
            };
            ckpt.save(&dir.join(format!("{stem}.ckpt"))).runtime()?;
            write(&dir.join(format!("{stem}_metrics.csv")), &table::metrics_csv(&metrics).runtime()?)?;
            if strategy == Strategy::Profit {
                write(&dir.join(format!("{stem}_trace.csv")), &table::trace_csv(&out.traces).runtime()?)?;
            }
            write(&dir.join("config.txt"), config.echo().as_bytes())?;
            report(&config, &ckpt)
        }
        Command::Evaluate { checkpoint, domain, config, out_dir: dir } => {
            let config = load_config(config.as_deref())?;
            let ckpt = Checkpoint::load(&checkpoint).usage()?;
            let (name, bounds) = match domain {
                DomainArg::Original => ("original", config.plan.original),
                DomainArg::New => ("new", config.plan.new),
            };
            let grid = EvalGrid::new(&bounds, config.plan.eval_resolution).usage()?;
            let dir = out_dir(&config, dir)?;
            let arch = ckpt.model.architecture();
            let predictions = grid.predictions(arch, ckpt.model.params()).runtime()?;
            let error = profit_core::mlp::loss_mse(&predictions, grid.targets()).runtime()?;
            write(&dir.join(format!("grid_{name}.csv")), &table::grid_csv(grid.points(), &predictions, grid.targets()).runtime()?)?;
            println!("{error:?}");
            Ok(())
        }
        Command::Sweep { config, axis, out_dir: dir } => {
            let config = load_config(config.as_deref())?;
            let axis = SweepAxis::from(axis);
            let dir = out_dir(&config, dir)?;
            let sweep = experiment::run_ablation_sweep(&config, axis).runtime()?;
            write(&dir.join(format!("sweep_{}.csv", axis.name())), &sweep.to_csv().runtime()?)?;
            for v in sweep.values() {
                let (o, n) = sweep.mean_errors(v);
                println!("{} = {v:?}: original {o:.4}, new {n:.4}", axis.name());
            }
            Ok(())
        }
        Command::Experiment { config, out_dir: dir } => {
            let config = load_config(config.as_deref())?;
            let dir = out_dir(&config, dir)?;
            let results = experiment::run_experiment(&config).runtime()?;
            write(&dir.join("results.csv"), &results.to_csv().runtime()?)?;
            write(&dir.join("summary.csv"), &results.summary_csv().runtime()?)?;
            write(&dir.join("config.txt"), config.echo().as_bytes())?;
            for s in results.summary() {
                println!(
                    "{:<9} original {:.4} ± {:.4}   new {:.4} ± {:.4}",
                    s.strategy, s.original.mean, s.original.stderr, s.new.mean, s.new.stderr
                );
            }
            Ok(())
        }
    }
}

fn report(config: &RunConfig, ckpt: &Checkpoint) -> Result<(), Failure> {
    let grids = config.plan.grids().usage()?;
    let e = profit_core::toy::evaluate_domains(&ckpt.model, &grids).runtime()?;
    println!("original_error {:?}", e.original);
    println!("new_error {:?}", e.new);
    Ok(())
}
