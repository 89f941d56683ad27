//! Solvers for stochastic load balancing on unrelated machines.
//!
//! Job sizes are given as finite-support random variables `X_ij` (job `j` on
//! machine `i`) and the goal is a fixed, non-adaptive assignment minimizing
//! the expected makespan `E[max_i sum_{j in J_i} X_ij]`, a reward-budgeted
//! variant of the same objective, or the expected q-norm of the load vector.
//! All three solvers share the same skeleton: binary search on a scale `M`,
//! a relaxation over effective sizes solved with a separation oracle, and a
//! bipartite-matching rounding step whose theorem-backed postconditions are
//! asserted on every run.
//!
//! Exact evaluation of any of these objectives is #P-hard, so the [`eval`]
//! module provides the ground-truth oracles used to check solutions: exact
//! convolution (small supports), Monte Carlo estimation, and brute-force
//! enumeration of optimal assignments for tiny instances.
//!
//! Module map:
//! * [`dist`] — finite-support distributions: moments, truncated/exceptional
//!   split, effective sizes, exact convolution.
//! * [`instance`] — problem instances, adversarial and random generators,
//!   JSON serialization.
//! * [`lp`] — dense LP solver (bounded revised-tableau simplex) returning
//!   basic optimal solutions, plus a row-generation driver.
//! * [`assign_round`] — bipartite rounding: machine copies, job groups,
//!   min-cost matching, and the budgeted matching-adjacency rounding.
//! * [`makespan`] — expected-makespan pipeline.
//! * [`budgeted`] — reward-budgeted makespan pipeline.
//! * [`qnorm`] — expected q-norm pipeline (convex program + GAP rounding).
//! * [`eval`] — evaluation oracles and lower-bound checks.
//! * [`report`] — solve reports: search traces, bound checks, certificates.

pub mod assign_round;
pub mod budgeted;
pub mod dist;
pub mod eval;
pub mod instance;
pub mod lp;
pub mod makespan;
pub mod qnorm;
pub mod report;

pub use dist::DiscreteDist;
pub use instance::{Assignment, Instance, Job};
pub use report::SolveReport;
