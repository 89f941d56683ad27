//! Budgeted makespan: schedule a job subset of total reward at least a
//! target while keeping the expected makespan low.
//!
//! The feasibility system is the makespan probe with two changes: jobs may
//! be left fractionally unassigned (`sum_i y_ij <= 1`), and a reward row
//! forces `sum_j r_j sum_i y_ij >= R`. Preprocessing drops any pair whose
//! exceptional mass alone exceeds the system's budget of 2, which caps the
//! per-edge cost of the rounding at 2.
//!
//! Rounding swaps [`round_gap`] for [`round_budgeted`]: with the reward
//! row the matching polytope loses integrality (a fractional vertex can be
//! arbitrarily cheaper than every integral point), so the rounding instead
//! outputs a near-integral matching that may place two jobs on a single
//! machine copy. The guarantees per run: reward at least the target, total
//! exceptional cost at most 4, and per-machine truncated load at most
//! `b + 2`.

use crate::assign_round::{build_st_graph, round_budgeted};
use crate::eval::{evaluate, EvalObjective};
use crate::instance::Instance;
use crate::report::{CheckRecord, ProbeRecord, SolveError, SolveOptions, SolveReport};

use crate::makespan::{
    bracket_hi, class_assignment, class_count_excess, min_mean_placement, note_non_monotone,
    run_probe, tail_diagnostic, validate_options,
};

const CHECK_TOL: f64 = 1e-6;

/// Full pipeline: bracket, binary search over the budgeted probe,
/// classify, round with the reward floor, check, evaluate.
pub fn solve_budgeted(inst: &Instance, opts: &SolveOptions) -> Result<SolveReport, SolveError> {
    inst.validate()
        .map_err(|e| SolveError::Invalid(e.to_string()))?;
    validate_options(opts)?;
    let target = inst
        .reward_target
        .ok_or_else(|| SolveError::Invalid("instance carries no reward target".to_string()))?;
    let rewards: Vec<f64> = inst.jobs.iter().map(|j| j.reward).collect();
    let total_reward: f64 = rewards.iter().sum();
    if target > total_reward + 1e-9 {
        return Err(SolveError::Infeasible(format!(
            "reward target {target} exceeds the total available reward {total_reward}"
        )));
    }

    let mut report = SolveReport::new("budgeted", opts);
    report.reward_target = Some(target);

    let m_hi = bracket_hi(inst);
    if m_hi <= 1e-12 {
        report.placement = min_mean_placement(inst);
        report.achieved_reward = Some(total_reward);
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
    // Only jobs that every reward-feasible subset must contain give a valid
    // lower bound on the optimum.
    let m_lo = inst
        .jobs
        .iter()
        .filter(|job| total_reward - job.reward < target - 1e-9)
        .map(|job| {
            job.dists
                .values()
                .map(|d| d.mean())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max)
        / (4.0 * opts.b + 10.0);
    let m_lo = m_lo.max(1e-12);
    report.m_lo = m_lo;
    report.m_hi = m_hi;

    let mut trace: Vec<ProbeRecord> = Vec::new();
    let probe = |scale: f64,
                 trace: &mut Vec<ProbeRecord>|
     -> Result<crate::makespan::ProbeOutcome, SolveError> {
        let out = run_probe(
            inst,
            scale,
            opts.b,
            true,
            Some((&rewards, target)),
            Some(2.0),
        )?;
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
            "probe infeasible at the bracket top M = {m_hi}; raise b or lower the target"
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
    let unassigned = (0..tables.n)
        .filter(|&j| {
            (0..tables.m)
                .map(|i| y_dense[i * tables.n + j])
                .sum::<f64>()
                <= 1e-12
        })
        .count();
    if unassigned > 0 {
        report
            .notes
            .push(format!("{unassigned} job(s) left unassigned by the LP"));
    }
    let graph = build_st_graph(tables.m, tables.n, &y_dense, &ca.p, &ca.c, &rewards);
    let matching = round_budgeted(&graph, target)?;
    if matching.basis_repairs > 0 {
        report.notes.push(format!(
            "auxiliary LP needed {} objective perturbation(s) to reach a basic optimum",
            matching.basis_repairs
        ));
    }
    let machine_jobs = matching.machine_jobs(&graph);
    for (&machine, jobs) in &machine_jobs {
        for &j in jobs {
            report.placement.insert(inst.jobs[j].id.clone(), machine);
        }
    }
    report.achieved_reward = Some(matching.total_reward);
    report.two_job_machine = matching.two_job_copy.map(|c| graph.copies[c].machine);

    let loads = matching.machine_loads(&graph);
    let max_load = loads.iter().copied().fold(0.0f64, f64::max);
    let excluded_in_output = matching
        .matched
        .iter()
        .filter(|&&e| {
            let edge = &graph.edges[e];
            tables
                .pair(graph.copies[edge.copy].machine, edge.job)
                .is_none()
        })
        .count();
    report.checks.push(CheckRecord::ge(
        "reward_ge_target",
        matching.total_reward,
        target - 1e-9 * target.abs().max(1.0),
    ));
    report.checks.push(CheckRecord::le(
        "rounded_cost_le_4",
        matching.total_cost,
        4.0 + CHECK_TOL,
    ));
    report.checks.push(CheckRecord::le(
        "machine_load_le_b_plus_2",
        max_load,
        opts.b + 2.0 + CHECK_TOL,
    ));
    report.checks.push(CheckRecord::le(
        "pruned_pairs_in_output",
        excluded_in_output as f64,
        0.0,
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
    report.evaluation = Some(eval);
    Ok(report)
}
