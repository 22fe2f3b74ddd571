//! Experiment driver: configuration, the optimization loops and trace output.

pub mod config;
pub mod run;
pub mod trace;

pub use config::{read_config, Method, RunConfig, SuspensionConfig};
pub use run::{
    ci_gap, estimated_solution, median, optimum_value, run, run_seed, run_sequential, run_suspension, stopping_check,
    write_outputs, EstimatedSolution, RunTrace, SeedRun, SeedSummary, StopCheck, Summary,
};
pub use trace::{read_ledger, read_trace, write_ledger, write_trace, LedgerRow, TraceRow};
