//! Expected-makespan minimization on unrelated machines.
//!
//! The pipeline binary-searches a scale `M`, testing each candidate with a
//! linear feasibility system over fractional assignments `y`:
//!
//! * every job fully assigned;
//! * total exceptional mass (truncated-away tails) at most 2;
//! * for every `k` and every set `K` of `k` machines, the effective sizes
//!   at parameter `k` satisfy `sum_{i in K} z_i(k) <= b*k`, where
//!   `z_i(k) = sum_j beta_k(X'_ij) y_ij` — enforced lazily through a
//!   separation oracle (sort `z_.(k)` descending, test the top-`k` prefix).
//!
//! A feasible `y` is rounded in two steps. Machines are first classified:
//! repeatedly peel off the machines whose `z` value at level `|L|` is at
//! most `b` (a counting argument keeps at most `l` machines at class
//! `<= l`). Each machine then prices every job at its class's effective
//! size, which turns the instance into a generalized-assignment problem
//! rounded by [`round_gap`]. The class structure bounds the probability
//! that any machine's realized load overshoots, giving an expected makespan
//! of `O(b)` times the final scale.
//!
//! The `z` variables are substituted out of the LP (cut rows expand into
//! `y` coefficients): keeping `m^2` extra columns makes the tableau an
//! order of magnitude larger at m=64 for no change in the feasible region.
//! A small balance objective (minimize total excess of `z_i(m)` over the
//! uniform share) selects an even vertex among the many feasible ones; a
//! pure feasibility objective tends to return degenerate vertices that
//! pile jobs onto few machines.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::assign_round::{build_st_graph, round_gap};
use crate::dist::DiscreteDist;
use crate::eval::{evaluate, EvalObjective};
use crate::instance::Instance;
use crate::lp::{solve_with_cuts, LpModel, LpSolution, LpStatus, Row, Sense, Separation};
use crate::report::{CheckRecord, ProbeRecord, SolveError, SolveOptions, SolveReport};

/// Relative slack accepted on the guarantee checks.
const CHECK_TOL: f64 = 1e-6;

/// Per-pair data at a fixed scale: scaled-and-truncated distributions,
/// exceptional means, and effective sizes for every parameter `k`.
#[derive(Debug, Clone)]
pub struct ScaledTables {
    pub m: usize,
    pub n: usize,
    /// Allowed `(machine, job)` pairs, grouped by machine.
    pub pairs: Vec<(usize, usize)>,
    /// Row-major `m x n` lookup into `pairs`.
    pub pair_at: Vec<Option<usize>>,
    /// Contiguous `pairs` range of each machine.
    pub machine_span: Vec<Range<usize>>,
    /// Scaled sizes truncated at 1.
    pub trunc: Vec<DiscreteDist>,
    /// Scaled exceptional means `E[X'']`.
    pub exc_mean: Vec<f64>,
    /// `beta[k-1][pair]` = effective size at parameter `k`, `k` in `1..=m`.
    pub beta: Vec<Vec<f64>>,
}

impl ScaledTables {
    pub fn pair(&self, machine: usize, job: usize) -> Option<usize> {
        self.pair_at[machine * self.n + job]
    }
}

/// Builds the per-pair tables at scale `scale`. Pairs whose exceptional
/// mean exceeds `prune_exc_above` are dropped entirely (budgeted
/// preprocessing); the count of dropped pairs is returned alongside.
pub fn scaled_tables(
    inst: &Instance,
    scale: f64,
    prune_exc_above: Option<f64>,
) -> (ScaledTables, usize) {
    let m = inst.machines;
    let n = inst.num_jobs();
    let mut pairs = Vec::new();
    let mut pair_at = vec![None; m * n];
    let mut machine_span = Vec::with_capacity(m);
    let mut trunc = Vec::new();
    let mut exc_mean = Vec::new();
    let mut pruned = 0usize;
    for i in 0..m {
        let start = pairs.len();
        for (j, job) in inst.jobs.iter().enumerate() {
            let Some(dist) = job.dists.get(&i) else {
                continue;
            };
            let scaled = dist.map_values_monotone(|v| v / scale);
            let (lo, hi) = scaled.truncate_split(1.0);
            let c = hi.mean();
            if prune_exc_above.is_some_and(|cap| c > cap) {
                pruned += 1;
                continue;
            }
            pair_at[i * n + j] = Some(pairs.len());
            pairs.push((i, j));
            trunc.push(lo);
            exc_mean.push(c);
        }
        machine_span.push(start..pairs.len());
    }
    let beta: Vec<Vec<f64>> = (1..=m)
        .map(|k| trunc.iter().map(|d| d.effective_size(k)).collect())
        .collect();
    (
        ScaledTables {
            m,
            n,
            pairs,
            pair_at,
            machine_span,
            trunc,
            exc_mean,
            beta,
        },
        pruned,
    )
}

/// Effective-size loads `z[i][k-1] = sum_j beta_k(X'_ij) y_ij` for a
/// candidate fractional assignment (`y` indexed like `tables.pairs`).
pub fn machine_z(t: &ScaledTables, y: &[f64]) -> Vec<Vec<f64>> {
    let mut z = vec![vec![0.0; t.m]; t.m];
    for k in 0..t.m {
        let beta = &t.beta[k];
        for (pid, &(i, _)) in t.pairs.iter().enumerate() {
            z[i][k] += beta[pid] * y[pid];
        }
    }
    z
}

/// Separation for the subset-load family: for each `k`, the worst set of
/// `k` machines is the top-`k` by `z_i(k)`. Returns the most violated
/// `(k, K)` with `K` sorted ascending, or `None` when feasible.
pub fn find_violated_cut(z: &[Vec<f64>], b: f64) -> Option<(usize, Vec<usize>)> {
    let m = z.len();
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for k in 1..=m {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &c| z[c][k - 1].total_cmp(&z[a][k - 1]).then(a.cmp(&c)));
        let sum: f64 = idx[..k].iter().map(|&i| z[i][k - 1]).sum();
        let violation = sum - b * k as f64;
        if violation > 1e-7 * (1.0 + b * k as f64)
            && best.as_ref().map_or(true, |&(v, _, _)| violation > v)
        {
            let mut subset = idx[..k].to_vec();
            subset.sort_unstable();
            best = Some((violation, k, subset));
        }
    }
    best.map(|(_, k, subset)| (k, subset))
}

/// Assembles the probe LP at a fixed scale. Variables are `y` per allowed
/// pair plus one balance slack per machine; rows are the assignment rows
/// (`=1`, or `<=1` when `sub_stochastic`), the exceptional-mass row, the
/// always-valid singleton and full-set load rows, the balance rows, and
/// optionally a reward row `sum_j r_j (sum_i y_ij) >= target` (scaled by
/// the largest reward for conditioning). Remaining subset rows come from
/// the separation oracle.
pub fn build_makespan_lp(
    t: &ScaledTables,
    b: f64,
    sub_stochastic: bool,
    reward: Option<(&[f64], f64)>,
) -> LpModel {
    let mut model = LpModel::new();
    for _ in 0..t.pairs.len() {
        model.add_var(0.0, (0.0, f64::INFINITY));
    }
    let u0 = t.pairs.len();
    for _ in 0..t.m {
        model.add_var(1.0, (0.0, f64::INFINITY));
    }

    let mut by_job: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (pid, &(_, j)) in t.pairs.iter().enumerate() {
        by_job.entry(j).or_default().push((pid, 1.0));
    }
    for (j, coeffs) in &by_job {
        let sense = if sub_stochastic { Sense::Le } else { Sense::Eq };
        model.add_row(format!("job[{j}]"), coeffs, sense, 1.0);
    }

    let exc_row: Vec<(usize, f64)> = t
        .exc_mean
        .iter()
        .enumerate()
        .map(|(pid, &c)| (pid, c))
        .collect();
    model.add_row("exceptional", &exc_row, Sense::Le, 2.0);

    let beta_top = &t.beta[t.m - 1];
    for i in 0..t.m {
        let coeffs: Vec<(usize, f64)> = t.machine_span[i]
            .clone()
            .map(|pid| (pid, t.beta[0][pid]))
            .collect();
        model.add_row(format!("cut[k=1;K={i}]"), &coeffs, Sense::Le, b);
    }
    let full: Vec<(usize, f64)> = (0..t.pairs.len()).map(|pid| (pid, beta_top[pid])).collect();
    model.add_row(
        format!("cut[k={};K=all]", t.m),
        &full,
        Sense::Le,
        b * t.m as f64,
    );

    // Balance rows: u_i absorbs any excess of z_i(m) over the uniform
    // share; minimizing total excess spreads the fractional load.
    let tau: f64 = by_job
        .values()
        .map(|coeffs| {
            coeffs
                .iter()
                .map(|&(pid, _)| beta_top[pid])
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / t.m as f64;
    for i in 0..t.m {
        let mut coeffs: Vec<(usize, f64)> = t.machine_span[i]
            .clone()
            .map(|pid| (pid, beta_top[pid]))
            .collect();
        coeffs.push((u0 + i, -1.0));
        model.add_row(format!("balance[{i}]"), &coeffs, Sense::Le, tau);
    }

    if let Some((rewards, target)) = reward {
        let max_r = rewards.iter().fold(0.0f64, |a, &r| a.max(r.abs())).max(1.0);
        let coeffs: Vec<(usize, f64)> = t
            .pairs
            .iter()
            .enumerate()
            .map(|(pid, &(_, j))| (pid, rewards[j] / max_r))
            .collect();
        model.add_row("reward", &coeffs, Sense::Ge, target / max_r);
    }
    model
}

/// Machine classes from the `z` matrix (`z[i][k-1]`): repeatedly peel off
/// `L' = {i in L : z_i(|L|) <= b}` and give those machines class `|L|`.
/// When tolerance slack empties `L'`, the test is retried at `b(1+1e-6)`;
/// if still empty the probe is declared infeasible.
pub fn classify_machines(z: &[Vec<f64>], b: f64) -> Result<Vec<usize>, SolveError> {
    let m = z.len();
    let mut classes = vec![0usize; m];
    let mut live: Vec<usize> = (0..m).collect();
    while !live.is_empty() {
        let ell = live.len();
        let mut selected: Vec<usize> = live
            .iter()
            .copied()
            .filter(|&i| z[i][ell - 1] <= b)
            .collect();
        if selected.is_empty() {
            selected = live
                .iter()
                .copied()
                .filter(|&i| z[i][ell - 1] <= b * (1.0 + 1e-6))
                .collect();
        }
        if selected.is_empty() {
            return Err(SolveError::Infeasible(format!(
                "no machine passes the class test at level {ell}"
            )));
        }
        for &i in &selected {
            classes[i] = ell;
        }
        live.retain(|i| !selected.contains(i));
    }
    Ok(classes)
}

/// Largest excess of `|{i : class_i <= l}|` over `l`; zero when the
/// class-count invariant holds.
pub fn class_count_excess(classes: &[usize]) -> usize {
    let m = classes.len();
    (1..=m)
        .map(|l| {
            classes
                .iter()
                .filter(|&&c| c <= l)
                .count()
                .saturating_sub(l)
        })
        .max()
        .unwrap_or(0)
}

/// Classes plus the per-pair deterministic reduction: machine `i` prices
/// job `j` at `p_ij = beta_{class_i}(X'_ij)`, with cost `c_ij = E[X''_ij]`.
/// Matrices are dense row-major `m x n` (zero where forbidden), ready for
/// [`build_st_graph`].
#[derive(Debug, Clone)]
pub struct ClassAssignment {
    pub classes: Vec<usize>,
    pub p: Vec<f64>,
    pub c: Vec<f64>,
}

pub fn class_assignment(
    t: &ScaledTables,
    y: &[f64],
    b: f64,
) -> Result<ClassAssignment, SolveError> {
    let z = machine_z(t, y);
    let classes = classify_machines(&z, b)?;
    let mut p = vec![0.0; t.m * t.n];
    let mut c = vec![0.0; t.m * t.n];
    for (pid, &(i, j)) in t.pairs.iter().enumerate() {
        p[i * t.n + j] = t.beta[classes[i] - 1][pid];
        c[i * t.n + j] = t.exc_mean[pid];
    }
    Ok(ClassAssignment { classes, p, c })
}

pub(crate) struct ProbeOutcome {
    pub tables: ScaledTables,
    pub pruned: usize,
    pub cuts: usize,
    /// Fractional assignment per pair; `None` when the probe is infeasible.
    pub y: Option<Vec<f64>>,
}

/// Runs one feasibility probe at the given scale: builds tables and the
/// LP, then alternates solving with subset-row separation.
pub(crate) fn run_probe(
    inst: &Instance,
    scale: f64,
    b: f64,
    sub_stochastic: bool,
    reward: Option<(&[f64], f64)>,
    prune_exc_above: Option<f64>,
) -> Result<ProbeOutcome, SolveError> {
    let (tables, pruned) = scaled_tables(inst, scale, prune_exc_above);
    let mut model = build_makespan_lp(&tables, b, sub_stochastic, reward);
    let base_rows = model.num_rows();
    let npairs = tables.pairs.len();
    let t = &tables;
    let sol = solve_with_cuts(&mut model, 10 * t.m * t.m + 20, |s: &LpSolution| {
        let z = machine_z(t, &s.values[..npairs]);
        match find_violated_cut(&z, b) {
            None => Separation::Feasible,
            Some((k, subset)) => {
                let mut coeffs = Vec::new();
                for &i in &subset {
                    for pid in t.machine_span[i].clone() {
                        coeffs.push((pid, t.beta[k - 1][pid]));
                    }
                }
                let members: Vec<String> = subset.iter().map(|i| i.to_string()).collect();
                Separation::Violated(Row {
                    label: format!("cut[k={k};K={}]", members.join(",")),
                    coeffs,
                    sense: Sense::Le,
                    rhs: b * k as f64,
                })
            }
        }
    })?;
    let cuts = model.num_rows() - base_rows;
    let y = match sol.status {
        LpStatus::Optimal => Some(sol.values[..npairs].to_vec()),
        _ => None,
    };
    Ok(ProbeOutcome {
        tables,
        pruned,
        cuts,
        y,
    })
}

/// Upper end of the scale bracket: expected makespan of assigning every
/// job to its smallest-mean machine is at most the sum of those means.
pub(crate) fn bracket_hi(inst: &Instance) -> f64 {
    inst.jobs
        .iter()
        .map(|job| {
            job.dists
                .values()
                .map(|d| d.mean())
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Lower end: the hardest job costs at least its smallest mean under any
/// assignment, and the output is within `denom` of optimal.
pub(crate) fn bracket_lo(inst: &Instance, denom: f64) -> f64 {
    let hardest = inst
        .jobs
        .iter()
        .map(|job| {
            job.dists
                .values()
                .map(|d| d.mean())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max);
    (hardest / denom).max(1e-12)
}

pub(crate) fn min_mean_placement(inst: &Instance) -> BTreeMap<String, usize> {
    inst.jobs
        .iter()
        .map(|job| {
            let best = job
                .dists
                .iter()
                .map(|(&i, d)| (i, d.mean()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .expect("validated jobs have at least one machine")
                .0;
            (job.id.clone(), best)
        })
        .collect()
}

pub(crate) fn note_non_monotone(trace: &[ProbeRecord], notes: &mut Vec<String>) {
    let worst_feasible = trace
        .iter()
        .filter(|p| p.feasible)
        .map(|p| p.m)
        .fold(f64::INFINITY, f64::min);
    if trace
        .iter()
        .any(|p| !p.feasible && p.m > worst_feasible * (1.0 + 1e-9))
    {
        notes.push("non-monotone probe feasibility observed (tolerance-level)".to_string());
    }
}

/// Monte Carlo tail diagnostic: for each machine with class `l >= 2`, the
/// probability that its truncated load exceeds `b+1+alpha` should be at
/// most `l^{-alpha}` plus sampling noise. Returns the worst margin as a
/// check record (negative margin = comfortable pass).
pub(crate) fn tail_diagnostic(
    t: &ScaledTables,
    classes: &[usize],
    machine_jobs: &BTreeMap<usize, Vec<usize>>,
    b: f64,
    seed: u64,
) -> CheckRecord {
    const N: u64 = 2000;
    let mut worst = f64::NEG_INFINITY;
    for (&i, jobs) in machine_jobs {
        let ell = classes[i] as f64;
        if ell < 2.0 || jobs.is_empty() {
            continue;
        }
        let dists: Vec<&DiscreteDist> = jobs
            .iter()
            .map(|&j| &t.trunc[t.pair(i, j).expect("matched pair exists")])
            .collect();
        for (a_idx, alpha) in [1.0f64, 2.0].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a11_d1a6);
            rng.set_stream((i as u64) * 2 + a_idx as u64);
            let mut hits = 0u64;
            for _ in 0..N {
                let load: f64 = dists.iter().map(|d| d.quantile(rng.gen::<f64>())).sum();
                if load > b + 1.0 + alpha {
                    hits += 1;
                }
            }
            let phat = hits as f64 / N as f64;
            let se = (phat * (1.0 - phat) / N as f64).sqrt();
            worst = worst.max(phat - ell.powf(-alpha) - 3.0 * se);
        }
    }
    let value = if worst.is_finite() { worst } else { 0.0 };
    CheckRecord::le("tail_diagnostic", value, 0.0)
}

pub(crate) fn validate_options(opts: &SolveOptions) -> Result<(), SolveError> {
    if !(opts.b > 0.0) {
        return Err(SolveError::Invalid("b must be positive".into()));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon < 1.0) {
        return Err(SolveError::Invalid("epsilon must lie in (0, 1)".into()));
    }
    if !(opts.cp_epsilon > 0.0 && opts.cp_epsilon < 1.0) {
        return Err(SolveError::Invalid("cp-epsilon must lie in (0, 1)".into()));
    }
    if opts.samples < 100 {
        return Err(SolveError::Invalid("samples must be at least 100".into()));
    }
    Ok(())
}

/// Full pipeline: bracket, binary search, classify, round, check, evaluate.
pub fn solve_makespan(inst: &Instance, opts: &SolveOptions) -> Result<SolveReport, SolveError> {
    inst.validate()
        .map_err(|e| SolveError::Invalid(e.to_string()))?;
    validate_options(opts)?;
    let mut report = SolveReport::new("makespan", opts);

    let m_hi = bracket_hi(inst);
    if m_hi <= 1e-12 {
        report.placement = min_mean_placement(inst);
        report
            .notes
            .push("degenerate: every job has a zero-size machine".to_string());
        let eval = evaluate(
            inst,
            &report.assignment(),
            EvalObjective::Makespan,
            opts.samples,
            opts.seed,
            opts.threads,
        )?;
        report.evaluation = Some(eval);
        return Ok(report);
    }
    let m_lo = bracket_lo(inst, 4.0 * opts.b + 10.0);
    report.m_lo = m_lo;
    report.m_hi = m_hi;

    let mut trace: Vec<ProbeRecord> = Vec::new();
    let probe = |scale: f64, trace: &mut Vec<ProbeRecord>| -> Result<ProbeOutcome, SolveError> {
        let out = run_probe(inst, scale, opts.b, false, None, None)?;
        trace.push(ProbeRecord {
            m: scale,
            feasible: out.y.is_some(),
            cuts: out.cuts,
            pruned_pairs: out.pruned,
        });
        Ok(out)
    };

    let top = probe(m_hi, &mut trace)?;
    if top.y.is_none() {
        return Err(SolveError::Infeasible(format!(
            "probe infeasible at the bracket top M = {m_hi}; raise b"
        )));
    }
    let mut accepted = (m_hi, top);
    let (mut lo, mut hi) = (m_lo, m_hi);
    let mut rounds = 0;
    while hi / lo > 1.0 + opts.epsilon && rounds < 200 {
        rounds += 1;
        let mid = (lo * hi).sqrt();
        let out = probe(mid, &mut trace)?;
        if out.y.is_some() {
            hi = mid;
            accepted = (mid, out);
        } else {
            lo = mid;
        }
    }
    note_non_monotone(&trace, &mut report.notes);
    report.trace = trace;
    let (m_final, outcome) = accepted;
    report.m_final = m_final;

    let tables = outcome.tables;
    let y = outcome.y.expect("accepted probe is feasible");
    let ca = class_assignment(&tables, &y, opts.b)?;

    let mut y_dense = vec![0.0; tables.m * tables.n];
    for (pid, &(i, j)) in tables.pairs.iter().enumerate() {
        y_dense[i * tables.n + j] = y[pid];
    }
    let graph = build_st_graph(
        tables.m,
        tables.n,
        &y_dense,
        &ca.p,
        &ca.c,
        &vec![1.0; tables.n],
    );
    let matching = round_gap(&graph)?;
    let machine_jobs = matching.machine_jobs(&graph);
    for (&machine, jobs) in &machine_jobs {
        for &j in jobs {
            report.placement.insert(inst.jobs[j].id.clone(), machine);
        }
    }
    if report.placement.len() != inst.num_jobs() {
        return Err(SolveError::Invalid(
            "rounding failed to place every job".to_string(),
        ));
    }

    let frac_cost: f64 = tables.exc_mean.iter().zip(&y).map(|(&c, &yv)| c * yv).sum();
    let max_p = ca.p.iter().copied().fold(0.0f64, f64::max);
    let loads = matching.machine_loads(&graph);
    let max_load = loads.iter().copied().fold(0.0f64, f64::max);
    report.checks.push(CheckRecord::le(
        "fractional_cost_le_2",
        frac_cost,
        2.0 + CHECK_TOL,
    ));
    report.checks.push(CheckRecord::le(
        "rounded_cost_le_2",
        matching.total_cost,
        2.0 + CHECK_TOL,
    ));
    report
        .checks
        .push(CheckRecord::le("truncated_sizes_le_1", max_p, 1.0 + 1e-9));
    report.checks.push(CheckRecord::le(
        "machine_load_le_b_plus_1",
        max_load,
        opts.b + 1.0 + CHECK_TOL,
    ));
    report.checks.push(CheckRecord::le(
        "class_count_excess",
        class_count_excess(&ca.classes) as f64,
        0.0,
    ));
    report.checks.push(tail_diagnostic(
        &tables,
        &ca.classes,
        &machine_jobs,
        opts.b,
        opts.seed,
    ));

    let eval = evaluate(
        inst,
        &report.assignment(),
        EvalObjective::Makespan,
        opts.samples,
        opts.seed,
        opts.threads,
    )?;
    report.checks.push(CheckRecord::le(
        "expected_makespan_le_(4b+10)M",
        eval.value,
        (4.0 * opts.b + 10.0) * m_final + eval.ci_half_width + CHECK_TOL,
    ));
    report.evaluation = Some(eval);
    Ok(report)
}
