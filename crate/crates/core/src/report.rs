//! Shared solver plumbing: options, error type, and the solve report.
//!
//! Every solver returns a [`SolveReport`]: the binary-search bracket and
//! probe trace, the rounded placement, the per-run guarantee checks with
//! their bounds, and a ground-truth evaluation of the output. Reports
//! serialize deterministically (ordered maps, fixed field order) so that
//! identical runs produce byte-identical JSON.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::assign_round::RoundError;
use crate::eval::{EvalError, EvalResult};
use crate::instance::Assignment;
use crate::lp::LpError;

#[derive(Debug, Error)]
pub enum SolveError {
    /// No feasible solution exists at the top of the search bracket (or the
    /// reward target is plainly unattainable).
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Round(#[from] RoundError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Tuning knobs shared by the solvers.
#[derive(Debug, Clone, Serialize)]
pub struct SolveOptions {
    /// Per-machine effective-size budget in the feasibility system.
    pub b: f64,
    /// Relative width of the binary-search bracket at termination.
    pub epsilon: f64,
    /// Relative duality-gap target for the convex program (q-norm only).
    pub cp_epsilon: f64,
    /// Monte Carlo sample count for the report evaluation.
    pub samples: u64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            b: 17.0,
            epsilon: 0.01,
            cp_epsilon: 1e-3,
            samples: 100_000,
            seed: 0,
            threads: 1,
        }
    }
}

/// One binary-search probe.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeRecord {
    pub m: f64,
    pub feasible: bool,
    /// Separation cuts added before the verdict.
    pub cuts: usize,
    /// Pairs dropped by preprocessing at this scale (budgeted only).
    pub pruned_pairs: usize,
}

/// A named guarantee check: `pass` iff `value <= bound` (up to the slack
/// already folded into `bound`).
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn le(name: impl Into<String>, value: f64, bound: f64) -> Self {
        CheckRecord {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    pub fn ge(name: impl Into<String>, value: f64, bound: f64) -> Self {
        CheckRecord {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// "makespan", "budgeted", or "qnorm".
    pub objective: String,
    pub b: f64,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_target: Option<f64>,
    /// Initial bracket and the accepted scale.
    pub m_lo: f64,
    pub m_hi: f64,
    pub m_final: f64,
    pub trace: Vec<ProbeRecord>,
    pub placement: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieved_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_job_machine: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit_ratio: Option<f64>,
    pub checks: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalResult>,
    pub notes: Vec<String>,
}

impl SolveReport {
    pub fn new(objective: &str, opts: &SolveOptions) -> Self {
        SolveReport {
            objective: objective.to_string(),
            b: opts.b,
            epsilon: opts.epsilon,
            cp_epsilon: None,
            q: None,
            reward_target: None,
            m_lo: 0.0,
            m_hi: 0.0,
            m_final: 0.0,
            trace: Vec::new(),
            placement: BTreeMap::new(),
            achieved_reward: None,
            two_job_machine: None,
            cp_value: None,
            cp_gap: None,
            explicit_ratio: None,
            checks: Vec::new(),
            evaluation: None,
            notes: Vec::new(),
        }
    }

    pub fn assignment(&self) -> Assignment {
        Assignment {
            placement: self.placement.clone(),
        }
    }

    pub fn checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
