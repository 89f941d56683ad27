//! `stochbal` — solve, evaluate, generate, and compare stochastic
//! load-balancing instances from the command line.
//!
//! Exit codes: 0 on success, 2 when a solve fails for bracket/infeasibility
//! reasons, 1 for I/O problems and invalid input.

use std::fs;

use clap::{Args, Parser, Subcommand};

use stochbal_cli::commands::{cmd_compare, cmd_evaluate, cmd_generate, cmd_solve};
use stochbal_cli::config::{thread_cap, CliError, ReportFormat, RunConfig};

#[derive(Parser)]
#[command(
    name = "stochbal",
    version,
    about = "Stochastic load balancing on unrelated machines"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an instance; the report carries the assignment, the search
    /// trace, every bound check, and an evaluation of the result.
    Solve(SolveArgs),
    /// Evaluate a stored assignment (exact when supports allow, else Monte
    /// Carlo).
    Evaluate(EvaluateArgs),
    /// Write a generator fixture as an instance file.
    Generate(GenerateArgs),
    /// Tabulate the solver against the baseline policies on one instance.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file (JSON).
    #[arg(long)]
    instance: String,
    /// Objective: makespan, budgeted, or qnorm.
    #[arg(long, default_value = "makespan")]
    objective: String,
    /// Norm exponent for qnorm (overrides the instance's q).
    #[arg(long)]
    q: Option<f64>,
    /// Per-machine effective-size budget.
    #[arg(long, default_value_t = 17.0)]
    b: f64,
    /// Relative width of the scale bracket at termination.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Relative duality-gap target for the convex program (qnorm only).
    #[arg(long, default_value_t = 1e-3)]
    cp_epsilon: f64,
    /// Monte Carlo samples for the report evaluation.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file (stdout if omitted).
    #[arg(long)]
    out: Option<String>,
    /// Report format: json or csv.
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Instance file (JSON).
    #[arg(long)]
    instance: String,
    /// Assignment file, or a solve report whose placement is used.
    #[arg(long)]
    assignment: String,
    /// Objective: makespan, budgeted, or qnorm.
    #[arg(long, default_value = "makespan")]
    objective: String,
    /// Norm exponent for qnorm (overrides the instance's q).
    #[arg(long)]
    q: Option<f64>,
    /// Monte Carlo samples when exact evaluation is out of reach.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result file (stdout if omitted).
    #[arg(long)]
    out: Option<String>,
    /// Result format: json or csv.
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct GenerateArgs {
    /// Fixture family: surrogate-gap, adaptivity-gap, budgeted-gap, random,
    /// random-bernoulli, random-two-point, or random-uniform-grid.
    #[arg(long = "type")]
    gen_type: String,
    /// Machine count (surrogate-gap, adaptivity-gap, random).
    #[arg(long)]
    m: Option<usize>,
    /// Job count (budgeted-gap, random).
    #[arg(long)]
    n: Option<usize>,
    /// Generator seed (random families).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance file (stdout if omitted).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Instance file (JSON).
    #[arg(long)]
    instance: String,
    /// Per-machine effective-size budget for the solver run.
    #[arg(long, default_value_t = 17.0)]
    b: f64,
    /// Relative width of the scale bracket at termination.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Monte Carlo samples per evaluation.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Table file (stdout if omitted).
    #[arg(long)]
    out: Option<String>,
    /// Table format: csv (default) or json.
    #[arg(long, default_value = "csv")]
    format: String,
}

fn parse_objective(cfg: &mut RunConfig, s: &str) -> Result<(), CliError> {
    cfg.objective = Some(s.parse().map_err(CliError::Usage)?);
    Ok(())
}

fn parse_format(cfg: &mut RunConfig, s: &str) -> Result<(), CliError> {
    cfg.format = s.parse().map_err(CliError::Usage)?;
    Ok(())
}

fn deliver(text: &str, out: Option<&str>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli, threads: usize) -> Result<(), CliError> {
    match cli.command {
        Cmd::Solve(a) => {
            let mut cfg = RunConfig::new("solve");
            cfg.instance = Some(a.instance);
            parse_objective(&mut cfg, &a.objective)?;
            cfg.q = a.q;
            cfg.b = a.b;
            cfg.epsilon = a.epsilon;
            cfg.cp_epsilon = a.cp_epsilon;
            cfg.samples = a.samples;
            cfg.seed = a.seed;
            cfg.out = a.out;
            parse_format(&mut cfg, &a.format)?;
            let text = cmd_solve(&cfg, threads)?;
            deliver(&text, cfg.out.as_deref())
        }
        Cmd::Evaluate(a) => {
            let mut cfg = RunConfig::new("evaluate");
            cfg.instance = Some(a.instance);
            cfg.assignment = Some(a.assignment);
            parse_objective(&mut cfg, &a.objective)?;
            cfg.q = a.q;
            cfg.samples = a.samples;
            cfg.seed = a.seed;
            cfg.out = a.out;
            parse_format(&mut cfg, &a.format)?;
            let text = cmd_evaluate(&cfg, threads)?;
            deliver(&text, cfg.out.as_deref())
        }
        Cmd::Generate(a) => {
            let mut cfg = RunConfig::new("generate");
            cfg.gen_type = Some(a.gen_type);
            cfg.m = a.m;
            cfg.n = a.n;
            cfg.seed = a.seed;
            cfg.out = a.out;
            let text = cmd_generate(&cfg)?;
            deliver(&text, cfg.out.as_deref())
        }
        Cmd::Compare(a) => {
            let mut cfg = RunConfig::new("compare");
            cfg.instance = Some(a.instance);
            cfg.format = ReportFormat::Csv;
            cfg.b = a.b;
            cfg.epsilon = a.epsilon;
            cfg.samples = a.samples;
            cfg.seed = a.seed;
            cfg.out = a.out;
            parse_format(&mut cfg, &a.format)?;
            let text = cmd_compare(&cfg, threads)?;
            deliver(&text, cfg.out.as_deref())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land on stdout and are not failures; real
            // argument errors map to the invalid-input exit code.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli, thread_cap()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
