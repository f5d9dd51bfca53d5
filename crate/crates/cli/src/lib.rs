//! Experiment harness: sweeps lambda over several fair-regression methods,
//! matches fairness budgets and writes trade-off curves as CSV.

pub mod budget;
pub mod config;
pub mod emit;
pub mod error;
pub mod grid;
pub mod methods;
pub mod sweep;

pub use budget::{match_budget, BudgetResult, UnfairnessMetric};
pub use config::{Config, Overrides};
pub use emit::{aggregate, emit_curves, Aggregate};
pub use error::{CliError, Result};
pub use methods::Method;
pub use sweep::{run_sweep, SweepRecord};
