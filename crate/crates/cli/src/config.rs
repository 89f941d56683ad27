//! Run configuration, exit-code policy, and the report version stamp.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use stochbal::eval::EvalError;
use stochbal::instance::InstanceError;
use stochbal::report::{SolveError, SolveOptions};

/// Version stamped into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Objective selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Makespan,
    Budgeted,
    Qnorm,
}

impl FromStr for ObjectiveKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "makespan" => Ok(ObjectiveKind::Makespan),
            "budgeted" => Ok(ObjectiveKind::Budgeted),
            "qnorm" => Ok(ObjectiveKind::Qnorm),
            other => Err(format!(
                "unknown objective {other:?} (expected makespan, budgeted, or qnorm)"
            )),
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::Makespan => "makespan",
            ObjectiveKind::Budgeted => "budgeted",
            ObjectiveKind::Qnorm => "qnorm",
        })
    }
}

/// Output format. JSON is the canonical report; CSV projects the evaluation
/// columns for tabulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?} (expected json or csv)")),
        }
    }
}

/// Complete description of a run, embedded in every report so a reader can
/// reproduce it. The worker-thread cap (`STOCHBAL_THREADS`) is deliberately
/// absent: results must not depend on it, so it is not part of the
/// configuration a report answers for.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub b: f64,
    pub epsilon: f64,
    pub cp_epsilon: f64,
    pub samples: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub format: ReportFormat,
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    pub gen_type: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl RunConfig {
    /// Defaults shared by every command: `b = 17`, `epsilon = 0.01`,
    /// `cp_epsilon = 1e-3`, `samples = 100_000`, `seed = 0`, JSON output.
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            instance: None,
            assignment: None,
            objective: None,
            q: None,
            b: 17.0,
            epsilon: 0.01,
            cp_epsilon: 1e-3,
            samples: 100_000,
            seed: 0,
            out: None,
            format: ReportFormat::Json,
            gen_type: None,
            m: None,
            n: None,
        }
    }

    /// Solver knobs for this run; `threads` comes from the environment, not
    /// the configuration.
    pub fn solve_options(&self, threads: usize) -> SolveOptions {
        SolveOptions {
            b: self.b,
            epsilon: self.epsilon,
            cp_epsilon: self.cp_epsilon,
            samples: self.samples,
            seed: self.seed,
            threads,
        }
    }
}

/// Worker-thread cap from `STOCHBAL_THREADS`; defaults to 1.
pub fn thread_cap() -> usize {
    std::env::var("STOCHBAL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

/// Any command failure, tagged with the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    /// Exit code: 2 for bracket/infeasibility failures, 1 for everything
    /// else (I/O, invalid input, numerical trouble).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solve(SolveError::Infeasible(_)) => 2,
            _ => 1,
        }
    }
}
