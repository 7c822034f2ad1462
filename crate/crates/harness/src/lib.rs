//! Configuration, checkpoints, CSV output and experiment orchestration for
//! the PROFIT toy benchmark. The `profit` binary is a thin wrapper around
//! [`cli::main_with_args`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod table;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{ConfigError, RunConfig, SweepAxis};
pub use table::{ResultsTable, SweepTable};
