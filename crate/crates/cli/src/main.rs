//! `spreduce`: reduce, sweep and validate stable LTI models.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 infeasible reduction,
//! 3 validation failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spreduce::gen::{generate, GeneratorConfig};
use spreduce::io::{
    load_model, load_reduced_with_metadata, save_model, save_reduced, ModelFormat, ReducedMetadata,
};
use spreduce::pipeline::{
    parse_orders, run_reduce, run_sweep, stiefel_termination, thread_pool_from_env, validate_reduction, GreedyReport,
    MethodSet, StartKind, SweepOptions, ValidationReport,
};
use spreduce::stiefel::{OptimizationReport, DEFAULT_BUDGET};
use spreduce::{Error, StateSpaceModel};

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "spreduce", version, about = "Singular-perturbation model reduction with H2-optimal state selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a model to a single order.
    Reduce(ReduceArgs),
    /// Reduce over a range of orders and write an error-vs-order CSV.
    Sweep(SweepArgs),
    /// Recompute a reduction error by Lyapunov, impulse and white-noise routes.
    Validate(ValidateArgs),
    /// Write a generated test model to disk.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Greedy,
    Stiefel,
    Both,
}

impl From<MethodArg> for MethodSet {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Greedy => MethodSet::GREEDY,
            MethodArg::Stiefel => MethodSet::STIEFEL,
            MethodArg::Both => MethodSet::BOTH,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Mtx,
}

impl From<FormatArg> for ModelFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ModelFormat::Json,
            FormatArg::Mtx => ModelFormat::MatrixMarket,
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelSource {
    /// Model file (JSON) or Matrix Market directory.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Generate a model from a preset: small, medium, paper-like.
    #[arg(long)]
    generate: Option<String>,
}

#[derive(Args)]
struct CommonArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Input format; inferred from the path when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "both")]
    method: MethodArg,
    /// Seed for optimizer cold starts; also replaces the preset's generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Optimizer iteration budget.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    order: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Orders: `2,5,10`, `2..20` (inclusive) or `5..50:5`.
    #[arg(long)]
    orders: String,
    /// CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fill the wall_time_s column (the CSV is then no longer reproducible byte for byte).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Reduced model JSON written by `reduce`.
    #[arg(long)]
    reduced: PathBuf,
    /// White-noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "small")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_INPUT, message: e.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if is_infeasible(&e) { EXIT_INFEASIBLE } else { EXIT_INPUT };
        Failure { code, message: e.to_string() }
    }
}

/// Errors from a method run once the order itself has been checked.
fn is_infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::NoReductionPossible(_)
            | Error::SingularFastBlock { .. }
            | Error::RankDeficientOutput { .. }
            | Error::AlignmentInfeasible { .. }
            | Error::InvalidOrder { .. }
    )
}

fn preset(name: &str, seed: Option<u64>) -> Result<GeneratorConfig, Failure> {
    let mut cfg = GeneratorConfig::preset(name).ok_or_else(|| {
        Failure::input(format!("unknown preset {name:?}; choose one of {}", GeneratorConfig::PRESETS.join(", ")))
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load(path: &Path, format: Option<FormatArg>) -> Result<StateSpaceModel, Failure> {
    let format = format.map_or_else(|| ModelFormat::infer(path), Into::into);
    load_model(path, format).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn acquire_model(common: &CommonArgs) -> Result<StateSpaceModel, Failure> {
    match (&common.source.model, &common.source.generate) {
        (Some(path), _) => load(path, common.format),
        (None, Some(name)) => Ok(generate(&preset(name, common.seed)?)?),
        (None, None) => Err(Failure::input("one of --model or --generate is required")),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct StiefelRunReport<'a> {
    order: usize,
    start: StartKind,
    termination: &'a str,
    #[serde(flatten)]
    report: &'a OptimizationReport,
}

#[derive(Serialize)]
struct RunReport<'a> {
    n: usize,
    order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    greedy_trace: Option<&'a GreedyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    greedy_h2_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    greedy_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stiefel: Option<StiefelRunReport<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stiefel_error: Option<String>,
}

fn cmd_reduce(args: ReduceArgs) -> Result<(), Failure> {
    let model = acquire_model(&args.common)?;
    if args.order == 0 || args.order > model.n() {
        return Err(Failure::input(format!("--order must lie in 1..={}, got {}", model.n(), args.order)));
    }
    fs::create_dir_all(&args.out).map_err(|e| Failure::input(format!("{}: {e}", args.out.display())))?;
    let pool = thread_pool_from_env()?;
    let c = &args.common;
    let outcome = pool.install(|| run_reduce(&model, c.method.into(), args.order, c.seed.unwrap_or(0), c.budget))?;

    let mut report = RunReport {
        n: model.n(),
        order: args.order,
        greedy_trace: outcome.greedy_report.as_ref(),
        greedy_h2_error: None,
        greedy_error: None,
        stiefel: None,
        stiefel_error: None,
    };
    println!("model: n={} m={} p={}, target order {}", model.n(), model.m(), model.p(), args.order);
    let mut first_error = None;
    match &outcome.greedy {
        Some(Ok(g)) => {
            let meta = ReducedMetadata { h2_error: Some(g.h2_error), ..Default::default() };
            save_reduced(&g.reduced, &meta, &args.out.join("reduced_greedy.json"))?;
            report.greedy_h2_error = Some(g.h2_error);
            println!("greedy:  h2_error {:.6e}", g.h2_error);
        }
        Some(Err(e)) => {
            println!("greedy:  failed: {e}");
            report.greedy_error = Some(e.to_string());
            first_error.get_or_insert(e.clone());
        }
        None => {}
    }
    let termination;
    match &outcome.stiefel {
        Some(Ok(s)) => {
            let meta = ReducedMetadata {
                coordinates: Some("transformed: x_t = L^T x, with L the Cholesky factor of X solving A^T X + X A = -I".into()),
                transform: Some(s.transform.clone()),
                h2_error: Some(s.report.final_objective),
            };
            save_reduced(&s.reduced, &meta, &args.out.join("reduced_stiefel.json"))?;
            termination = stiefel_termination(&s.report, c.budget);
            println!(
                "stiefel: h2_error {:.6e} ({} start, {} iterations, {termination})",
                s.report.final_objective,
                match s.start {
                    StartKind::Warm => "warm",
                    StartKind::Cold => "cold",
                },
                s.report.iterations
            );
            report.stiefel =
                Some(StiefelRunReport { order: s.order, start: s.start, termination, report: &s.report });
        }
        Some(Err(e)) => {
            println!("stiefel: failed: {e}");
            report.stiefel_error = Some(e.to_string());
            first_error.get_or_insert(e.clone());
        }
        None => {}
    }
    let json = serde_json::to_string_pretty(&report).map_err(Failure::input)?;
    write(&args.out.join("report.json"), &json)?;
    if outcome.any_success() {
        Ok(())
    } else {
        Err(first_error.map(Failure::from).unwrap_or_else(|| Failure::input("no method selected")))
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let orders = parse_orders(&args.orders).map_err(Failure::input)?;
    let model = acquire_model(&args.common)?;
    let c = &args.common;
    let opts = SweepOptions { methods: c.method.into(), seed: c.seed.unwrap_or(0), budget: c.budget, timing: args.timing };
    let pool = thread_pool_from_env()?;
    let result = pool.install(|| run_sweep(&model, &orders, &opts)).map_err(Failure::input)?;
    let csv = result.to_csv();
    match &args.out {
        Some(path) => write(path, &csv)?,
        None => print!("{csv}"),
    }
    if result.rows.iter().any(|r| r.h2_error.is_some()) {
        Ok(())
    } else {
        Err(Failure { code: EXIT_INFEASIBLE, message: "no requested order could be reduced".into() })
    }
}

#[derive(Serialize)]
struct ValidationOutput<'a> {
    #[serde(flatten)]
    report: Option<&'a ValidationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let model = load(&args.model, args.format)?;
    let (reduced, meta) = load_reduced_with_metadata(&args.reduced)
        .map_err(|e| Failure::input(format!("{}: {e}", args.reduced.display())))?;
    let result = validate_reduction(&model, &reduced, meta.h2_error, args.seed);
    let (output, outcome) = match &result {
        Ok(report) => {
            println!("lyapunov     {:.9e}", report.lyapunov);
            println!("impulse      {:.9e}  (relative deviation {:.3e})", report.impulse, report.impulse_deviation);
            println!("white_noise  {:.9e}  (relative deviation {:.3e})", report.white_noise, report.white_noise_deviation);
            if let (Some(v), Some(d)) = (report.recorded, report.recorded_deviation) {
                println!("recorded     {v:.9e}  (relative deviation {d:.3e})");
            }
            let outcome = if report.passed {
                println!("PASS");
                Ok(())
            } else {
                println!("FAIL");
                Err(Failure { code: EXIT_VALIDATION, message: "reduction error routes disagree".into() })
            };
            (ValidationOutput { report: Some(report), failure: None }, outcome)
        }
        // Dimension errors are input errors; anything else means the pair does not validate.
        Err(e @ Error::DimensionMismatch(_)) => return Err(Failure::input(e)),
        Err(e) => {
            println!("FAIL: {e}");
            (
                ValidationOutput { report: None, failure: Some(e.to_string()) },
                Err(Failure { code: EXIT_VALIDATION, message: e.to_string() }),
            )
        }
    };
    if let Some(path) = &args.report {
        write(path, &serde_json::to_string_pretty(&output).map_err(Failure::input)?)?;
    }
    outcome
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let model = generate(&preset(&args.preset, args.seed)?)?;
    let format: ModelFormat = args.format.into();
    save_model(&model, &args.out, format).map_err(|e| Failure::input(format!("{}: {e}", args.out.display())))?;
    println!("wrote n={} m={} p={} model to {}", model.n(), model.m(), model.p(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Reduce(a) => cmd_reduce(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
