//! Dense linear programming: a two-phase tableau simplex that returns basic
//! optimal solutions, and a row-generation driver for constraint families
//! described by a separation oracle.
//!
//! The assignment LPs solved here have exponentially many load constraints,
//! so the driver alternates solving the explicit relaxation with asking an
//! oracle for one violated row. Basic (vertex) solutions matter downstream:
//! the budgeted rounding relies on the fractional support of a vertex of a
//! bipartite matching polytope being a single path or cycle.
//!
//! Pivoting uses Dantzig's rule with deterministic index tie-breaks, and
//! falls back to Bland's rule after 1000 degenerate pivots to rule out
//! cycling. Tolerances: feasibility 1e-7, reduced cost 1e-9.

use thiserror::Error;

pub type VarId = usize;

/// Feasibility tolerance: rows and phase-1 residuals within this are
/// treated as satisfied.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost tolerance used as the optimality test.
pub const COST_TOL: f64 = 1e-9;
/// Degenerate pivots tolerated before switching to Bland's rule.
const BLAND_THRESHOLD: usize = 1000;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("row generation exceeded {0} rounds")]
    RoundLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn flip(self) -> Sense {
        match self {
            Sense::Le => Sense::Ge,
            Sense::Eq => Sense::Eq,
            Sense::Ge => Sense::Le,
        }
    }
}

/// One constraint row: sparse coefficients, sense, right-hand side, and a
/// human-readable label carried into debug dumps.
#[derive(Debug, Clone)]
pub struct Row {
    pub label: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization LP over variables with finite lower bounds and optional
/// upper bounds.
#[derive(Debug, Clone, Default)]
pub struct LpModel {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver output. `values`, `objective`, and `basic` are meaningful only
/// when `status == Optimal`; the point is then a basic feasible solution
/// (at most one basic variable per row is away from its bound).
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub basic: Vec<bool>,
}

impl LpSolution {
    fn non_optimal(status: LpStatus) -> Self {
        LpSolution {
            status,
            values: Vec::new(),
            objective: f64::NAN,
            basic: Vec::new(),
        }
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v]
    }
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with objective coefficient `obj` and bounds
    /// `lo <= x <= hi`. `lo` must be finite; `hi` may be `f64::INFINITY`.
    /// A finite upper bound is realized as an internal row, so models whose
    /// constraints already imply the bound should pass infinity.
    pub fn add_var(&mut self, obj: f64, (lo, hi): (f64, f64)) -> VarId {
        assert!(obj.is_finite() && lo.is_finite() && hi >= lo);
        self.objective.push(obj);
        self.lower.push(lo);
        self.upper.push(hi);
        self.objective.len() - 1
    }

    pub fn add_row(
        &mut self,
        label: impl Into<String>,
        coeffs: &[(VarId, f64)],
        sense: Sense,
        rhs: f64,
    ) {
        let mut seen = vec![false; self.objective.len()];
        for &(v, c) in coeffs {
            assert!(c.is_finite(), "non-finite coefficient");
            assert!(v < self.objective.len(), "unknown variable {v}");
            assert!(!seen[v], "duplicate variable {v} in row");
            seen[v] = true;
        }
        assert!(rhs.is_finite());
        self.rows.push(Row {
            label: label.into(),
            coeffs: coeffs.to_vec(),
            sense,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Dump in LP text format for debugging (`--dump-lp`).
    pub fn to_lp_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "\\ {} vars, {} rows", self.num_vars(), self.num_rows());
        let _ = writeln!(out, "Minimize");
        let terms: Vec<String> = self
            .objective
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c != 0.0)
            .map(|(v, &c)| format!("{c:+} x{v}"))
            .collect();
        let _ = writeln!(
            out,
            " obj: {}",
            if terms.is_empty() {
                "0".into()
            } else {
                terms.join(" ")
            }
        );
        let _ = writeln!(out, "Subject To");
        for row in &self.rows {
            let body: Vec<String> = row
                .coeffs
                .iter()
                .map(|&(v, c)| format!("{c:+} x{v}"))
                .collect();
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(out, " {}: {} {} {}", row.label, body.join(" "), op, row.rhs);
        }
        let _ = writeln!(out, "Bounds");
        for v in 0..self.num_vars() {
            if self.upper[v].is_finite() {
                let _ = writeln!(out, " {} <= x{v} <= {}", self.lower[v], self.upper[v]);
            } else {
                let _ = writeln!(out, " {} <= x{v}", self.lower[v]);
            }
        }
        out.push_str("End\n");
        out
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).solve(self)
    }
}

/// Verdict from a separation oracle for [`solve_with_cuts`].
pub enum Separation {
    Feasible,
    Violated(Row),
}

/// Solves `model` under an implicitly described constraint family: solve,
/// ask the oracle for a violated row, add it, repeat. On success the
/// returned point satisfies every explicit row and the oracle accepts it;
/// an infeasible status certifies the full system is infeasible.
pub fn solve_with_cuts(
    model: &mut LpModel,
    max_rounds: usize,
    mut oracle: impl FnMut(&LpSolution) -> Separation,
) -> Result<LpSolution, LpError> {
    for _ in 0..max_rounds {
        let sol = model.solve()?;
        if sol.status != LpStatus::Optimal {
            return Ok(sol);
        }
        match oracle(&sol) {
            Separation::Feasible => return Ok(sol),
            Separation::Violated(row) => model.add_row(row.label, &row.coeffs, row.sense, row.rhs),
        }
    }
    Err(LpError::RoundLimit(max_rounds))
}

// ---------------------------------------------------------------------------
// Two-phase dense tableau.

struct Tableau {
    /// nrows x ncols; last column is the right-hand side.
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row; last cell holds minus the current objective.
    cost: Vec<f64>,
    /// Basic column of each row.
    basis: Vec<usize>,
    /// Columns barred from entering (artificials in phase 2).
    banned: Vec<bool>,
    ncols: usize,
    n_struct: usize,
    first_artificial: usize,
    degenerate_pivots: usize,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn build(model: &LpModel) -> Tableau {
        let nv = model.num_vars();
        // Shift each variable to x~ = x - lo >= 0 and materialize finite
        // upper bounds as rows over x~.
        let mut rows_in: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
        for row in &model.rows {
            let mut dense = vec![0.0; nv];
            let mut rhs = row.rhs;
            for &(v, c) in &row.coeffs {
                dense[v] = c;
                rhs -= c * model.lower[v];
            }
            rows_in.push((dense, row.sense, rhs));
        }
        for v in 0..nv {
            if model.upper[v].is_finite() {
                let mut dense = vec![0.0; nv];
                dense[v] = 1.0;
                rows_in.push((dense, Sense::Le, model.upper[v] - model.lower[v]));
            }
        }
        for (dense, sense, rhs) in &mut rows_in {
            if *rhs < 0.0 {
                for c in dense.iter_mut() {
                    *c = -*c;
                }
                *rhs = -*rhs;
                *sense = sense.flip();
            }
        }

        let n_slack = rows_in.iter().filter(|(_, s, _)| *s != Sense::Eq).count();
        let n_art = rows_in.iter().filter(|(_, s, _)| *s != Sense::Le).count();
        let first_slack = nv;
        let first_artificial = nv + n_slack;
        let ncols = nv + n_slack + n_art + 1;

        let mut rows = Vec::with_capacity(rows_in.len());
        let mut basis = Vec::with_capacity(rows_in.len());
        let mut slack_at = first_slack;
        let mut art_at = first_artificial;
        for (dense, sense, rhs) in rows_in {
            let mut row = vec![0.0; ncols];
            row[..nv].copy_from_slice(&dense);
            row[ncols - 1] = rhs;
            match sense {
                Sense::Le => {
                    row[slack_at] = 1.0;
                    basis.push(slack_at);
                    slack_at += 1;
                }
                Sense::Ge => {
                    row[slack_at] = -1.0;
                    slack_at += 1;
                    row[art_at] = 1.0;
                    basis.push(art_at);
                    art_at += 1;
                }
                Sense::Eq => {
                    row[art_at] = 1.0;
                    basis.push(art_at);
                    art_at += 1;
                }
            }
            rows.push(row);
        }

        let max_pivots = 20_000 + 50 * (rows.len() + ncols);
        Tableau {
            rows,
            cost: vec![0.0; ncols],
            basis,
            banned: vec![false; ncols],
            ncols,
            n_struct: nv,
            first_artificial,
            degenerate_pivots: 0,
            pivots: 0,
            max_pivots,
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let piv = self.rows[r][e];
        let inv = 1.0 / piv;
        for c in self.rows[r].iter_mut() {
            *c *= inv;
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (rr, row) in self.rows.iter_mut().enumerate() {
            if rr == r {
                continue;
            }
            let f = row[e];
            if f != 0.0 {
                for (cell, &p) in row.iter_mut().zip(&pivot_row) {
                    *cell -= f * p;
                }
                row[e] = 0.0;
            }
        }
        let f = self.cost[e];
        if f != 0.0 {
            for (cell, &p) in self.cost.iter_mut().zip(&pivot_row) {
                *cell -= f * p;
            }
            self.cost[e] = 0.0;
        }
        self.rows[r] = pivot_row;
        self.basis[r] = e;
    }

    /// Runs simplex iterations on the current cost row until optimal.
    /// Returns false when an entering column admits no leaving row
    /// (unbounded objective).
    fn iterate(&mut self) -> Result<bool, LpError> {
        loop {
            let bland = self.degenerate_pivots > BLAND_THRESHOLD;
            let mut entering: Option<usize> = None;
            let mut best_cost = -COST_TOL;
            for c in 0..self.ncols - 1 {
                if self.banned[c] {
                    continue;
                }
                if self.cost[c] < best_cost {
                    best_cost = self.cost[c];
                    entering = Some(c);
                    if bland {
                        break;
                    }
                }
            }
            let Some(e) = entering else { return Ok(true) };

            let rhs = self.ncols - 1;
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][e];
                if a <= COST_TOL {
                    continue;
                }
                let ratio = self.rows[r][rhs] / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - 1e-12
                            || (ratio < lratio + 1e-12 && self.basis[r] < self.basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if ratio < 1e-10 {
                self.degenerate_pivots += 1;
            }
            self.pivot(r, e);
            self.pivots += 1;
            if self.pivots > self.max_pivots {
                return Err(LpError::NumericalFailure(format!(
                    "pivot limit {} exceeded",
                    self.max_pivots
                )));
            }
        }
    }

    fn solve(mut self, model: &LpModel) -> Result<LpSolution, LpError> {
        let rhs = self.ncols - 1;

        // Phase 1: minimize total artificial mass.
        if self.first_artificial < rhs {
            for c in self.first_artificial..rhs {
                self.cost[c] = 1.0;
            }
            for r in 0..self.rows.len() {
                if self.basis[r] >= self.first_artificial {
                    let row = self.rows[r].clone();
                    for (cell, p) in self.cost.iter_mut().zip(&row) {
                        *cell -= p;
                    }
                }
            }
            if !self.iterate()? {
                return Err(LpError::NumericalFailure(
                    "phase 1 reported unbounded".into(),
                ));
            }
            if -self.cost[rhs] > FEAS_TOL {
                return Ok(LpSolution::non_optimal(LpStatus::Infeasible));
            }
            // Drive leftover artificials out of the basis; a row where no
            // real column can replace one is redundant and is dropped.
            for r in (0..self.rows.len()).rev() {
                if self.basis[r] < self.first_artificial {
                    continue;
                }
                let col = (0..self.first_artificial).find(|&c| self.rows[r][c].abs() > FEAS_TOL);
                match col {
                    Some(c) => self.pivot(r, c),
                    None => {
                        self.rows.swap_remove(r);
                        self.basis.swap_remove(r);
                    }
                }
            }
            for c in self.first_artificial..rhs {
                self.banned[c] = true;
            }
        }

        // Phase 2: the real objective over shifted variables.
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        self.cost[..self.n_struct].copy_from_slice(&model.objective[..]);
        self.degenerate_pivots = 0;
        for r in 0..self.rows.len() {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                let row = self.rows[r].clone();
                for (cell, p) in self.cost.iter_mut().zip(&row) {
                    *cell -= cb * p;
                }
            }
        }
        if !self.iterate()? {
            return Ok(LpSolution::non_optimal(LpStatus::Unbounded));
        }

        let mut values = model.lower.clone();
        let mut basic = vec![false; model.num_vars()];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                values[b] += self.rows[r][rhs].max(0.0);
                basic[b] = true;
            }
        }
        let objective = values
            .iter()
            .zip(&model.objective)
            .map(|(x, c)| x * c)
            .sum();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            values,
            objective,
            basic,
        })
    }
}
