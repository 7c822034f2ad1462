//! Proximally restricted fine-tuning.
//!
//! This crate carries the numerical core of the PROFIT optimizer: a flat
//! parameter-vector algebra, a fixed-family MLP with hand-derived reverse-mode
//! gradients, the classical first-order optimizers PROFIT wraps, the PROFIT
//! step itself, and the 2D `sin(10|x|)` regression benchmark used to study
//! forgetting under fine-tuning.
//!
//! The crate is `no_std` (with `alloc`). Enable the `std` feature to let the
//! matrix kernels pick SIMD implementations at runtime.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod mlp;
pub mod optim;
pub mod param;
pub mod profit;
pub mod rng;
pub mod toy;

pub use error::{Error, Result};
pub use mlp::{Activation, Architecture, Batch, Init, Mlp, Workspace};
pub use optim::{OptimizerKind, OptimizerSpec, OptimizerState};
pub use param::{ParamVector, Rejection, DEGENERATE_EPS};
pub use profit::{ProfitConfig, ProfitOptimizer, ProfitStepTrace};
