//! `cvxinv`: batch front end for the invariance checkers and solvers.
//!
//! Every subcommand reads one JSON bundle and writes `verdict.json`,
//! `report.txt` and its detail artifacts into the output directory. Exit
//! status: 0 pass, 1 checked failure, 2 operational error.

mod bundle;
mod commands;
mod expr;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::{Options, Outcome};

#[derive(Debug, Parser)]
#[command(name = "cvxinv", version, about = "Invariant convex bodies for elliptic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Left-eigenvector and ellipticity conditions for a system and a body.
    CheckConditions(RunArgs),
    /// Whether a matrix (or each constant coefficient) is admissible for a body.
    Classify(RunArgs),
    /// Diagonal-family or scalar-operator factorization of a constant system.
    DetectFactorization(RunArgs),
    /// Invariance check of a normalized discrete kernel.
    CheckTransform(RunArgs),
    /// Body-valued data whose transform leaves the body.
    Witness(RunArgs),
    /// Finite-difference Dirichlet solve on a box.
    SolveBox(RunArgs),
    /// Periodic half-space solve by Fourier modes.
    SolveHalfspace(RunArgs),
    /// Solve and audit against the body; `--budget` adds a seeded search.
    Audit(RunArgs),
    /// Normalization defect of the half-space solution operator.
    NormalizationCheck(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Problem bundle (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Tolerance override for the subcommand's main check.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for randomized searches.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Normal-sample budget for checks; search budget (solves) for audits.
    #[arg(long)]
    budget: Option<usize>,
    /// Nodes per axis for box solves; samples per period for half-space solves.
    #[arg(long)]
    grid: Option<usize>,
    /// Comma-separated heights for half-space solves.
    #[arg(long, value_delimiter = ',')]
    heights: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct Verdict<'a> {
    subcommand: &'a str,
    passed: bool,
    seed: u64,
    input: String,
    options: &'a Options,
    metrics: &'a BTreeMap<String, f64>,
    labels: &'a BTreeMap<String, String>,
    artifacts: Vec<&'a str>,
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::CheckConditions(a) => ("check-conditions", a),
            Command::Classify(a) => ("classify", a),
            Command::DetectFactorization(a) => ("detect-factorization", a),
            Command::CheckTransform(a) => ("check-transform", a),
            Command::Witness(a) => ("witness", a),
            Command::SolveBox(a) => ("solve-box", a),
            Command::SolveHalfspace(a) => ("solve-halfspace", a),
            Command::Audit(a) => ("audit", a),
            Command::NormalizationCheck(a) => ("normalization-check", a),
        }
    }
}

fn dispatch(name: &str, bundle: &bundle::Bundle, opts: &Options) -> Result<Outcome> {
    match name {
        "check-conditions" => commands::check_conditions(bundle, opts),
        "classify" => commands::classify(bundle, opts),
        "detect-factorization" => commands::detect(bundle, opts),
        "check-transform" => commands::check_transform(bundle, opts),
        "witness" => commands::witness(bundle, opts),
        "solve-box" => commands::solve_box(bundle, opts),
        "solve-halfspace" => commands::solve_halfspace(bundle, opts),
        "audit" => commands::audit(bundle, opts),
        _ => commands::normalization_check(bundle, opts),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(command: &Command) -> Result<bool> {
    let start = Instant::now();
    let (name, args) = command.split();
    let opts = Options {
        tol: args.tol,
        seed: args.seed,
        budget: args.budget,
        grid: args.grid,
        heights: args.heights.clone(),
    };
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let bundle = bundle::parse_bundle(&text, &args.input.display().to_string())?;
    let outcome = dispatch(name, &bundle, &opts)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let input = args
        .input
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut artifacts: Vec<&str> = outcome.artifacts.iter().map(|(n, _)| n.as_str()).collect();
    artifacts.push("report.txt");
    let verdict = Verdict {
        subcommand: name,
        passed: outcome.passed,
        seed: opts.seed,
        input,
        options: &opts,
        metrics: &outcome.metrics,
        labels: &outcome.labels,
        artifacts,
    };
    write(&args.out, "verdict.json", &(serde_json::to_string_pretty(&verdict)? + "\n"))?;

    let mut report = format!("{name}: {}\nseed: {}\n", if outcome.passed { "PASS" } else { "FAIL" }, opts.seed);
    for line in &outcome.report {
        report += line;
        report.push('\n');
    }
    write(&args.out, "report.txt", &report)?;
    for (file, contents) in &outcome.artifacts {
        write(&args.out, file, contents)?;
    }
    // wall-clock time is kept out of the reproducible artifacts
    write(&args.out, "run.log", &format!("{name} finished in {:.3} s\n", start.elapsed().as_secs_f64()))?;

    print!("{report}");
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
