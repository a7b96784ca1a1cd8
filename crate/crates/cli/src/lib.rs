//! Pipeline commands behind the `icepath` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{bench, budget_sweep, build_grid, map_features, optimize, solve_dump, OptimizeOutcome, SweepRow};
pub use config::{BenchConfig, RunConfig, SolverConfig, SolverKind};
pub use error::CliError;
