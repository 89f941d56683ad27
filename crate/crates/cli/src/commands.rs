//! The four subcommands and their report plumbing.
//!
//! Every JSON document a command emits carries the full [`RunConfig`] and
//! the crate version; CSV output is a fixed projection of the evaluation
//! columns with the header `instance,policy,objective,value,ci`.

use std::collections::BTreeMap;
use std::fs;

use serde::Serialize;
use serde_json::Value;

use stochbal::budgeted::solve_budgeted;
use stochbal::dist::DiscreteDist;
use stochbal::eval::{evaluate, EvalObjective, EvalResult};
use stochbal::instance::{
    gen_adaptivity_gap, gen_budgeted_gap, gen_random, gen_surrogate_gap, read_instance,
    BudgetedGapFixture, Job, RandomFamily,
};
use stochbal::makespan::solve_makespan;
use stochbal::qnorm::solve_qnorm;
use stochbal::{Assignment, Instance, SolveReport};

use crate::baselines::{mean_list_assignment, surrogate_assignment};
use crate::config::{CliError, ObjectiveKind, ReportFormat, RunConfig, VERSION};

/// Exact header of every CSV projection.
pub const CSV_HEADER: &str = "instance,policy,objective,value,ci";

/// One tabulated evaluation; doubles as the CSV row schema.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub instance: String,
    pub policy: String,
    pub objective: String,
    pub value: f64,
    pub ci: f64,
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    config: &'a RunConfig,
    version: &'static str,
    report: &'a SolveReport,
}

#[derive(Serialize)]
struct EvaluateDocument<'a> {
    config: &'a RunConfig,
    version: &'static str,
    evaluation: &'a EvalResult,
}

#[derive(Serialize)]
struct CompareDocument<'a> {
    config: &'a RunConfig,
    version: &'static str,
    rows: &'a [CompareRow],
}

fn render_json<T: Serialize>(doc: &T) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("report serializes");
    text.push('\n');
    text
}

fn render_csv(rows: &[CompareRow]) -> String {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.instance, row.policy, row.objective, row.value, row.ci
        ));
    }
    text
}

fn read_to_string(path: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_string(),
        source,
    })
}

/// Reads either a bare assignment file or a solve report; a report's
/// `placement` field is its assignment.
pub fn read_assignment_flexible(path: &str) -> Result<Assignment, CliError> {
    let text = read_to_string(path)?;
    if let Ok(asg) = Assignment::from_json_str(&text) {
        return Ok(asg);
    }
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{path}: not valid JSON: {e}")))?;
    let placement = value
        .pointer("/report/placement")
        .or_else(|| value.pointer("/placement"))
        .ok_or_else(|| {
            CliError::Usage(format!(
                "{path}: neither an assignment nor a report with a placement"
            ))
        })?;
    let placement: BTreeMap<String, usize> = serde_json::from_value(placement.clone())
        .map_err(|e| CliError::Usage(format!("{path}: bad placement map: {e}")))?;
    Ok(Assignment { placement })
}

/// Solves the instance under the configured objective and renders the report
/// (assignment, search trace, bound checks, evaluation) in one document.
pub fn cmd_solve(cfg: &RunConfig, threads: usize) -> Result<String, CliError> {
    let path = cfg
        .instance
        .as_deref()
        .ok_or_else(|| CliError::Usage("solve requires --instance".into()))?;
    let mut inst = read_instance(path)?;
    if let Some(q) = cfg.q {
        inst.q = Some(q);
    }
    let opts = cfg.solve_options(threads);
    let objective = cfg.objective.unwrap_or(ObjectiveKind::Makespan);
    let report = match objective {
        ObjectiveKind::Makespan => solve_makespan(&inst, &opts)?,
        ObjectiveKind::Budgeted => solve_budgeted(&inst, &opts)?,
        ObjectiveKind::Qnorm => solve_qnorm(&inst, &opts)?,
    };
    match cfg.format {
        ReportFormat::Json => Ok(render_json(&SolveDocument {
            config: cfg,
            version: VERSION,
            report: &report,
        })),
        ReportFormat::Csv => {
            let (value, ci) = report
                .evaluation
                .as_ref()
                .map_or((f64::NAN, 0.0), |e| (e.value, e.ci_half_width));
            Ok(render_csv(&[CompareRow {
                instance: path.to_string(),
                policy: "solver".into(),
                objective: objective.to_string(),
                value,
                ci,
            }]))
        }
    }
}

fn eval_objective(cfg: &RunConfig, inst: &Instance) -> Result<EvalObjective, CliError> {
    match cfg.objective.unwrap_or(ObjectiveKind::Makespan) {
        ObjectiveKind::Qnorm => {
            let q = cfg.q.or(inst.q).ok_or_else(|| {
                CliError::Usage("qnorm evaluation needs --q or an instance q".into())
            })?;
            Ok(EvalObjective::QNorm(q))
        }
        // A fixed assignment's reward is fixed; only the load objective is
        // left to measure.
        ObjectiveKind::Makespan | ObjectiveKind::Budgeted => Ok(EvalObjective::Makespan),
    }
}

/// Evaluates a stored assignment against an instance: exact when supports
/// allow, Monte Carlo otherwise, with the method recorded in the result.
pub fn cmd_evaluate(cfg: &RunConfig, threads: usize) -> Result<String, CliError> {
    let inst_path = cfg
        .instance
        .as_deref()
        .ok_or_else(|| CliError::Usage("evaluate requires --instance".into()))?;
    let asg_path = cfg
        .assignment
        .as_deref()
        .ok_or_else(|| CliError::Usage("evaluate requires --assignment".into()))?;
    let inst = read_instance(inst_path)?;
    let asg = read_assignment_flexible(asg_path)?;
    asg.validate_against(&inst)?;
    let obj = eval_objective(cfg, &inst)?;
    let result = evaluate(&inst, &asg, obj, cfg.samples, cfg.seed, threads)?;
    match cfg.format {
        ReportFormat::Json => Ok(render_json(&EvaluateDocument {
            config: cfg,
            version: VERSION,
            evaluation: &result,
        })),
        ReportFormat::Csv => Ok(render_csv(&[CompareRow {
            instance: inst_path.to_string(),
            policy: "assignment".into(),
            objective: cfg.objective.unwrap_or(ObjectiveKind::Makespan).to_string(),
            value: result.value,
            ci: result.ci_half_width,
        }])),
    }
}

/// Materializes the budgeted-gap fixture as an instance: each
/// `(machine, job, cost)` edge becomes a point mass of size `cost`.
pub fn budgeted_gap_instance(fix: &BudgetedGapFixture) -> Instance {
    let mut jobs: Vec<Job> = (0..fix.num_jobs)
        .map(|j| Job {
            id: format!("j{j}"),
            reward: fix.rewards[j],
            dists: BTreeMap::new(),
        })
        .collect();
    for &(i, j, cost) in &fix.edges {
        jobs[j].dists.insert(i, DiscreteDist::point_mass(cost));
    }
    Instance {
        machines: fix.num_machines,
        q: None,
        reward_target: Some(fix.reward_target),
        jobs,
    }
}

/// Writes a generator fixture as an instance file. Instance files have a
/// single schema, so the format flag does not apply here.
pub fn cmd_generate(cfg: &RunConfig) -> Result<String, CliError> {
    let ty = cfg
        .gen_type
        .as_deref()
        .ok_or_else(|| CliError::Usage("generate requires --type".into()))?;
    let need_m = || {
        cfg.m
            .ok_or_else(|| CliError::Usage(format!("--type {ty} requires --m")))
    };
    let need_n = || {
        cfg.n
            .ok_or_else(|| CliError::Usage(format!("--type {ty} requires --n")))
    };
    let inst = match ty {
        "surrogate-gap" => gen_surrogate_gap(need_m()?)?,
        "adaptivity-gap" => gen_adaptivity_gap(need_m()?)?,
        "budgeted-gap" => budgeted_gap_instance(&gen_budgeted_gap(need_n()?)?),
        "random" | "random-bernoulli" | "random-two-point" | "random-uniform-grid" => {
            let family = match ty {
                "random-bernoulli" => RandomFamily::Bernoulli,
                "random-uniform-grid" => RandomFamily::UniformGrid,
                _ => RandomFamily::TwoPoint,
            };
            gen_random(need_m()?, need_n()?, cfg.seed, family)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown type {other:?} (expected surrogate-gap, adaptivity-gap, \
                 budgeted-gap, random, random-bernoulli, random-two-point, or \
                 random-uniform-grid)"
            )))
        }
    };
    let mut text = inst.to_json_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    Ok(text)
}

/// Runs the makespan solver plus the two baseline policies on one instance
/// and tabulates the evaluator's verdict on each, one row per policy.
pub fn cmd_compare(cfg: &RunConfig, threads: usize) -> Result<String, CliError> {
    let path = cfg
        .instance
        .as_deref()
        .ok_or_else(|| CliError::Usage("compare requires --instance".into()))?;
    let inst = read_instance(path)?;
    let opts = cfg.solve_options(threads);
    let report = solve_makespan(&inst, &opts)?;
    let policies: Vec<(&str, Assignment)> = vec![
        ("solver", report.assignment()),
        ("surrogate", surrogate_assignment(&inst)),
        ("mean-list", mean_list_assignment(&inst)),
    ];
    let mut rows = Vec::with_capacity(policies.len());
    for (name, asg) in &policies {
        let result = evaluate(
            &inst,
            asg,
            EvalObjective::Makespan,
            cfg.samples,
            cfg.seed,
            threads,
        )?;
        rows.push(CompareRow {
            instance: path.to_string(),
            policy: name.to_string(),
            objective: "makespan".into(),
            value: result.value,
            ci: result.ci_half_width,
        });
    }
    match cfg.format {
        ReportFormat::Json => Ok(render_json(&CompareDocument {
            config: cfg,
            version: VERSION,
            rows: &rows,
        })),
        ReportFormat::Csv => Ok(render_csv(&rows)),
    }
}
