//! Bayesian optimization for cascade (multistage) black-box processes.

pub mod acq_ci;
pub mod acq_ei;
pub mod baselines;
pub mod benchmarks;
pub mod cascade;
pub mod error;
pub mod gp;
pub mod harness;
pub mod inner_opt;
pub mod rng;
pub mod surrogate;
pub mod suspension;

pub use error::{Error, Result};
