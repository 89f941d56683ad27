//! Library half of the `stochbal` command-line tool.
//!
//! The binary stays a thin argument parser; everything it does lives here so
//! tests can drive the same code paths:
//!
//! * [`config`] — run configuration embedded in every report, exit-code
//!   policy, and the `STOCHBAL_THREADS` worker cap.
//! * [`commands`] — the `solve`, `evaluate`, `generate`, and `compare`
//!   subcommands and their JSON/CSV rendering.
//! * [`baselines`] — the single-surrogate and mean-list policies that
//!   `compare` tabulates against the solver.

pub mod baselines;
pub mod commands;
pub mod config;

pub use commands::{cmd_compare, cmd_evaluate, cmd_generate, cmd_solve, CSV_HEADER};
pub use config::{thread_cap, CliError, ObjectiveKind, ReportFormat, RunConfig, VERSION};
