//! End-to-end runs shared by the command-line tool: single-order reductions,
//! order sweeps and simulation cross-checks.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greedy::{greedy_reduce, GreedyTrace, Termination};
use crate::linalg::Matrix;
use crate::model::{build_error_system, h2_error, H2Evaluator, ReducedModel, StateSpaceModel};
use crate::sp::reduce;
use crate::stiefel::{
    align_from_greedy, optimize, stabilizing_transform, OptimizationReport, StiefelPoint, StiefelProblem,
    TransformedModel,
};
use crate::validation::{impulse_response_error_system, white_noise_error_system, SimulationGrid};

pub const CSV_SCHEMA_HEADER: &str = "# spreduce sweep v1";
pub const CSV_COLUMNS: &str = "r,method,h2_error,iterations,wall_time_s,termination";
pub const THREADS_ENV: &str = "SPREDUCE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Greedy,
    Stiefel,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Greedy => "greedy",
            Method::Stiefel => "stiefel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodSet {
    pub greedy: bool,
    pub stiefel: bool,
}

impl MethodSet {
    pub const BOTH: MethodSet = MethodSet { greedy: true, stiefel: true };
    pub const GREEDY: MethodSet = MethodSet { greedy: true, stiefel: false };
    pub const STIEFEL: MethodSet = MethodSet { greedy: false, stiefel: true };
}

/// Build a rayon pool capped by `SPREDUCE_THREADS` when it is set.
pub fn thread_pool_from_env() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Parse `"2,5,10"`, `"2..10"` (inclusive) or `"2..10:2"`, or any comma list
/// of those. The result is sorted ascending without duplicates.
pub fn parse_orders(expr: &str) -> Result<Vec<usize>> {
    let bad = |part: &str| Error::InvalidConfig(format!("bad order expression {part:?}"));
    let mut out = Vec::new();
    for part in expr.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, rest)) = part.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((hi, step)) => (hi, step.trim().parse::<usize>().map_err(|_| bad(part))?),
                None => (rest, 1),
            };
            let lo: usize = lo.trim().parse().map_err(|_| bad(part))?;
            let hi: usize = hi.trim().parse().map_err(|_| bad(part))?;
            if step == 0 || lo > hi {
                return Err(bad(part));
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(Error::InvalidConfig("order list is empty".into()));
    }
    Ok(out)
}

fn check_order(model: &StateSpaceModel, r: usize) -> Result<()> {
    if r == 0 || r > model.n() {
        return Err(Error::InvalidOrder { order: r, n: model.n(), reason: "order must satisfy 1 <= r <= n" });
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GreedyStepReport {
    pub eliminated_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eliminated_label: Option<String>,
    pub order_after: usize,
    pub h2_error_after: f64,
    pub candidates_evaluated: usize,
    pub candidates_unstable: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreedyReport {
    pub n: usize,
    pub final_order: usize,
    pub termination: Termination,
    pub steps: Vec<GreedyStepReport>,
}

impl GreedyReport {
    pub fn new(trace: &GreedyTrace, model: &StateSpaceModel) -> Self {
        let steps = trace
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| GreedyStepReport {
                eliminated_index: s.eliminated_index,
                eliminated_label: model.labels().get(s.eliminated_index).cloned(),
                order_after: trace.n - k - 1,
                h2_error_after: s.h2_error_after,
                candidates_evaluated: s.candidates_evaluated,
                candidates_unstable: s.candidates_unstable,
            })
            .collect();
        Self { n: trace.n, final_order: trace.final_order(), termination: trace.termination, steps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Warm,
    Cold,
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    pub order: usize,
    pub reduced: ReducedModel,
    pub h2_error: f64,
}

#[derive(Debug, Clone)]
pub struct StiefelOutcome {
    pub order: usize,
    pub start: StartKind,
    pub report: OptimizationReport,
    /// Reduced model in transformed coordinates; I/O equivalent to a
    /// reduction of the original model.
    pub reduced: ReducedModel,
    pub transform: Matrix,
}

/// What stopped an optimizer run.
pub fn stiefel_termination(report: &OptimizationReport, budget: usize) -> &'static str {
    if report.converged {
        "converged"
    } else if report.iterations >= budget {
        "budget_exhausted"
    } else {
        "line_search_stalled"
    }
}

/// Run the optimizer at order `r`, warm-started from `greedy` when it reaches
/// `r`, from a seeded random point otherwise.
pub fn run_stiefel(
    tmodel: &TransformedModel,
    greedy: Option<&GreedyTrace>,
    r: usize,
    seed: u64,
    budget: usize,
) -> Result<StiefelOutcome> {
    let problem = StiefelProblem::new(tmodel, r)?;
    let warm = greedy.and_then(|g| align_from_greedy(&problem, g).ok());
    let (start, init) = match warm {
        Some(w) => (StartKind::Warm, w),
        None => {
            let (rows, cols) = problem.point_shape();
            (StartKind::Cold, StiefelPoint::random(rows, cols, seed)?)
        }
    };
    let report = optimize(&problem, &init, budget)?;
    let reduced = problem.reduced_model(&report.final_point)?;
    Ok(StiefelOutcome { order: r, start, report, reduced, transform: tmodel.l().clone() })
}

#[derive(Debug, Clone, Default)]
pub struct ReduceOutcome {
    pub greedy_report: Option<GreedyReport>,
    pub greedy: Option<Result<GreedyOutcome>>,
    pub stiefel: Option<Result<StiefelOutcome>>,
}

impl ReduceOutcome {
    pub fn any_success(&self) -> bool {
        matches!(self.greedy, Some(Ok(_))) || matches!(self.stiefel, Some(Ok(_)))
    }
}

/// Greedy reduction to exactly `r` states, or the reason it cannot get there.
fn greedy_at(model: &StateSpaceModel, trace: &Result<GreedyTrace>, r: usize) -> Result<GreedyOutcome> {
    if r == model.n() {
        return Ok(GreedyOutcome { order: r, reduced: model.as_reduced(), h2_error: 0.0 });
    }
    let trace = trace.as_ref().map_err(Clone::clone)?;
    let proj = trace.projection_at_order(r).ok_or(Error::NoReductionPossible(match trace.termination {
        Termination::CandidatesExhausted => "greedy ran out of unobserved states before this order",
        _ => "every further greedy elimination is unstable",
    }))?;
    let reduced = reduce(model, &proj)?;
    let h2_error = trace.error_at_order(r).expect("order lies on the trace");
    Ok(GreedyOutcome { order: r, reduced, h2_error })
}

/// Reduce `model` to order `r` with the selected methods.
pub fn run_reduce(model: &StateSpaceModel, methods: MethodSet, r: usize, seed: u64, budget: usize) -> Result<ReduceOutcome> {
    check_order(model, r)?;
    let mut out = ReduceOutcome::default();
    // Greedy also seeds the optimizer, so it runs whenever it can help.
    let trace = if r < model.n() { greedy_reduce(model, r) } else { Err(Error::NoReductionPossible("full order")) };
    if let Ok(t) = &trace {
        out.greedy_report = Some(GreedyReport::new(t, model));
    }
    if methods.greedy {
        out.greedy = Some(greedy_at(model, &trace, r));
    }
    if methods.stiefel {
        out.stiefel = Some(stabilizing_transform(model).and_then(|t| run_stiefel(&t, trace.as_ref().ok(), r, seed, budget)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub r: usize,
    pub method: Method,
    pub h2_error: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time_s: Option<f64>,
    pub termination: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub methods: MethodSet,
    pub seed: u64,
    pub budget: usize,
    /// Record wall-clock times; off keeps the CSV byte-identical across runs.
    pub timing: bool,
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_SCHEMA_HEADER}\n{CSV_COLUMNS}\n");
        for row in &self.rows {
            let h2 = row.h2_error.map(|v| format!("{v:e}"));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                row.r,
                row.method,
                fmt_opt(h2),
                fmt_opt(row.iterations),
                fmt_opt(row.wall_time_s.map(|t| format!("{t:.6}"))),
                row.termination
            );
        }
        s
    }

    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |row| row.method == method)
    }
}

/// Error-vs-order sweep. Greedy rows come from a single descending trace;
/// optimizer rows are independent per order and run in parallel.
pub fn run_sweep(model: &StateSpaceModel, orders: &[usize], opts: &SweepOptions) -> Result<SweepResult> {
    if orders.is_empty() {
        return Err(Error::InvalidConfig("order list is empty".into()));
    }
    for &r in orders {
        check_order(model, r)?;
    }
    let n = model.n();
    let lowest = *orders.iter().min().expect("non-empty");
    let started = Instant::now();
    let trace = if lowest < n { greedy_reduce(model, lowest) } else { Err(Error::NoReductionPossible("full order")) };
    let greedy_elapsed = started.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    if opts.methods.greedy {
        for &r in orders {
            let row = match greedy_at(model, &trace, r) {
                Ok(g) => SweepRow {
                    r,
                    method: Method::Greedy,
                    h2_error: Some(g.h2_error),
                    iterations: Some(n - r),
                    wall_time_s: opts.timing.then_some(greedy_elapsed),
                    termination: "reached_target_order".into(),
                },
                Err(_) => SweepRow {
                    r,
                    method: Method::Greedy,
                    h2_error: None,
                    iterations: None,
                    wall_time_s: None,
                    termination: match &trace {
                        Ok(t) => t.termination.to_string(),
                        Err(_) => "no_reduction_possible".into(),
                    },
                },
            };
            rows.push(row);
        }
    }
    if opts.methods.stiefel {
        let tmodel = stabilizing_transform(model)?;
        let warm = trace.as_ref().ok();
        let stiefel_rows: Vec<SweepRow> = orders
            .par_iter()
            .map(|&r| {
                let t0 = Instant::now();
                let res = run_stiefel(&tmodel, warm, r, opts.seed.wrapping_add(r as u64), opts.budget);
                let elapsed = t0.elapsed().as_secs_f64();
                match res {
                    Ok(o) => SweepRow {
                        r,
                        method: Method::Stiefel,
                        h2_error: Some(o.report.final_objective),
                        iterations: Some(o.report.iterations),
                        wall_time_s: opts.timing.then_some(elapsed),
                        termination: format!(
                            "{}_{}",
                            stiefel_termination(&o.report, opts.budget),
                            match o.start {
                                StartKind::Warm => "warm",
                                StartKind::Cold => "cold",
                            }
                        ),
                    },
                    Err(e) => SweepRow {
                        r,
                        method: Method::Stiefel,
                        h2_error: None,
                        iterations: None,
                        wall_time_s: None,
                        termination: error_tag(&e).into(),
                    },
                }
            })
            .collect();
        rows.extend(stiefel_rows);
    }
    Ok(SweepResult { rows })
}

fn error_tag(e: &Error) -> &'static str {
    match e {
        Error::InvalidOrder { .. } => "order_below_output_count",
        Error::RankDeficientOutput { .. } => "rank_deficient_output",
        Error::SingularFastBlock { .. } => "singular_fast_block",
        _ => "error",
    }
}

/// Relative deviation floor, as a fraction of the full model's squared H2 norm.
pub const VALIDATION_FLOOR: f64 = 1e-9;
/// Lyapunov and impulse routes must agree within this relative deviation.
pub const IMPULSE_TOLERANCE: f64 = 0.01;
/// Recorded and recomputed values must agree within this relative deviation.
pub const RECORDED_TOLERANCE: f64 = 0.01;
/// Upper bound on white-noise time steps; longer runs are shortened.
pub const MAX_NOISE_STEPS: f64 = 2e6;

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub lyapunov: f64,
    pub impulse: f64,
    pub white_noise: f64,
    pub impulse_deviation: f64,
    pub white_noise_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recorded: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recorded_deviation: Option<f64>,
    pub passed: bool,
}

/// Recompute the reduction error by Lyapunov, impulse integration and white
/// noise simulation. Passing requires the first two to agree within 1%, and
/// a recorded value (when given) to agree with the Lyapunov value.
pub fn validate_reduction(
    full: &StateSpaceModel,
    reduced: &ReducedModel,
    recorded: Option<f64>,
    seed: u64,
) -> Result<ValidationReport> {
    let err = build_error_system(full, reduced)?;
    let lyapunov = h2_error(&err)?;
    let full_norm = H2Evaluator::new(full)?.full_value();
    let scale = lyapunov.abs().max(VALIDATION_FLOOR * full_norm);
    let grid = SimulationGrid::impulse(&err)?;
    let impulse = impulse_response_error_system(&err, grid.horizon, grid.dt)?;
    let noise_grid = SimulationGrid::white_noise(&err)?;
    let duration = noise_grid.horizon.min(MAX_NOISE_STEPS * noise_grid.dt);
    let white_noise = white_noise_error_system(&err, seed, duration, noise_grid.dt)?;
    let impulse_deviation = (impulse - lyapunov).abs() / scale;
    let white_noise_deviation = (white_noise - lyapunov).abs() / scale;
    let recorded_deviation = recorded.map(|v| (v - lyapunov).abs() / scale);
    let passed = impulse_deviation <= IMPULSE_TOLERANCE && recorded_deviation.is_none_or(|d| d <= RECORDED_TOLERANCE);
    Ok(ValidationReport {
        lyapunov,
        impulse,
        white_noise,
        impulse_deviation,
        white_noise_deviation,
        recorded,
        recorded_deviation,
        passed,
    })
}
