use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use seasonal_spline::dictionary::{assemble, build_dictionary, evaluate_solution, GridSpec};
use seasonal_spline::error::Error as LibError;
use seasonal_spline::harness::{
    run_gamma_ladder, GroundTruth, LadderOptions, LadderProblem, SyntheticModel, MIN_PROBE_POINTS,
};
use seasonal_spline::operators::OperatorKind;
use seasonal_spline::quadratic::{gram, solve_quadratic, KernelMethod, KernelPair, PreparedPlan};
use seasonal_spline::sensing::{SensingFunctional, SensingKind};
use seasonal_spline::tv::{
    extract_support, solve_tv_from, CompositeSolution, KktReport, SolverConfig, SupportReport,
};

use crate::config::{plan_extent, probe_points, Loaded, Measurements};
use crate::error::{CliError, Result};
use crate::io::{write_csv, write_json, VERSION};

const DEFAULT_PROBE_POINTS: usize = 1024;
const EVAL_HEADER: [&str; 4] = ["t", "f_T", "f_S", "f"];

/// Command-line overrides shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub probe_points: Option<usize>,
    pub seed: Option<u64>,
}

/// What a command wrote and how it ended.
#[derive(Debug)]
pub struct Outcome {
    pub code: u8,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

fn residual_norm(fitted: &[f64], y: &[f64]) -> f64 {
    fitted
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn probe_grid(
    cfg: &Loaded,
    ov: &Overrides,
    fallback: (f64, f64),
    default_points: usize,
) -> Result<Vec<f64>> {
    let range = cfg.config.probe.range.unwrap_or(fallback);
    let n = ov
        .probe_points
        .or(cfg.config.probe.points)
        .unwrap_or(default_points);
    probe_points(range, n)
}

fn grid_extent(grid: &GridSpec) -> (f64, f64) {
    grid.window
}

#[derive(Serialize)]
struct FitArtifact<'a> {
    version: &'static str,
    command: &'static str,
    trend: &'a OperatorKind,
    seasonal: &'a OperatorKind,
    grid: &'a GridSpec,
    solver: &'a SolverConfig,
    converged: bool,
    iterations: usize,
    objective: f64,
    /// `‖Φ(f̃) - y‖`.
    residual_norm: f64,
    /// `sqrt(J)`: the residual can never exceed the square root of the objective.
    residual_bound: f64,
    trend_knots: &'a [f64],
    seasonal_knots: &'a [f64],
    solution: &'a CompositeSolution,
    support: Option<SupportReport>,
    support_error: Option<String>,
}

#[derive(Serialize)]
struct KktArtifact<'a> {
    version: &'static str,
    verdict: bool,
    iterations: usize,
    restarts: Option<usize>,
    polishes: Option<usize>,
    lipschitz: Option<f64>,
    report: &'a KktReport,
}

pub fn fit(cfg: &Loaded, ov: &Overrides) -> Result<Outcome> {
    let (trend, seasonal) = cfg.operators()?;
    let grid = cfg.grid()?;
    let solver = cfg.solver()?;
    let eta = cfg.config.support_eta;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(CliError::Config(format!(
            "support_eta must lie in (0, 1), got {eta}"
        )));
    }
    let (plan, y) = cfg.data()?;
    let probe = probe_grid(cfg, ov, grid_extent(grid), DEFAULT_PROBE_POINTS)?;
    let out = cfg.out_dir(ov.out.as_deref());

    let dict = build_dictionary(&trend, &seasonal, grid)?;
    let design = assemble(&dict, &plan)?;
    let (sol, trace, report, iterations) = match solve_tv_from(&design, &y, solver, None) {
        Ok((sol, trace)) => {
            let report = trace.report.clone();
            let iterations = trace.iterations;
            (sol, Some(trace), report, iterations)
        }
        Err(LibError::NotConverged {
            iterations,
            best,
            report,
        }) => (*best, None, *report, iterations),
        Err(e) => return Err(e.into()),
    };
    let converged = trace.is_some() && report.verdict;

    let fitted: Vec<f64> = (&design.matrix * sol.to_vector()).iter().copied().collect();
    let (support, support_error) = match extract_support(
        &dict,
        &design,
        &y,
        &sol,
        eta,
        (solver.lambda_t, solver.lambda_s),
    ) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let rows = probe
        .iter()
        .map(|&t| evaluate_solution(&dict, &sol, t).map(|(ft, fs)| vec![t, ft, fs, ft + fs]))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let artifact = FitArtifact {
        version: VERSION,
        command: "fit",
        trend: &cfg.config.trend,
        seasonal: &cfg.config.seasonal,
        grid,
        solver,
        converged,
        iterations,
        objective: sol.objective,
        residual_norm: residual_norm(&fitted, &y),
        residual_bound: sol.objective.max(0.0).sqrt(),
        trend_knots: dict.trend_knots(),
        seasonal_knots: dict.seasonal_knots(),
        solution: &sol,
        support,
        support_error,
    };
    let kkt = KktArtifact {
        version: VERSION,
        verdict: report.verdict,
        iterations,
        restarts: trace.as_ref().map(|t| t.restarts),
        polishes: trace.as_ref().map(|t| t.polishes),
        lipschitz: trace.as_ref().map(|t| t.lipschitz),
        report: &report,
    };
    let artifacts = vec![
        write_json(&out, "solution.json", &artifact)?,
        write_json(&out, "kkt.json", &kkt)?,
        write_csv(&out, "evaluation.csv", &EVAL_HEADER, rows)?,
    ];
    let summary =
        format!(
        "fit: {} after {iterations} iterations, objective {:.6e}, residual {:.3e}, kkt verdict {}",
        if converged { "converged" } else { "not converged" },
        sol.objective,
        artifact.residual_norm,
        report.verdict
    );
    Ok(Outcome {
        code: if converged { 0 } else { 3 },
        summary,
        artifacts,
    })
}

#[derive(Serialize)]
struct QuadraticArtifact<'a> {
    version: &'static str,
    command: &'static str,
    trend: &'a OperatorKind,
    seasonal: &'a OperatorKind,
    lambda: f64,
    trend_kernel: KernelMethod,
    seasonal_kernel: KernelMethod,
    alpha: &'a [f64],
    /// `G α`, the fitted measurements.
    fitted: Vec<f64>,
    residual_norm: f64,
    relative_residual: f64,
    jitter: f64,
    /// Max minus min of `f_S` over the probe grid.
    seasonal_spread: f64,
}

pub fn quadratic(cfg: &Loaded, ov: &Overrides) -> Result<Outcome> {
    let (trend, seasonal) = cfg.operators()?;
    let q = cfg.quadratic()?;
    let (plan, y) = cfg.data()?;
    let probe = probe_grid(cfg, ov, plan_extent(&plan), DEFAULT_PROBE_POINTS)?;
    let out = cfg.out_dir(ov.out.as_deref());

    let kernels = KernelPair::new(&trend, &seasonal, &q.kernel)?;
    let g = gram(&plan, &kernels)?;
    let fit = solve_quadratic(&g, &y, q.lambda)?;
    let fitted: Vec<f64> = (&g * DVector::from_column_slice(&fit.alpha))
        .iter()
        .copied()
        .collect();
    let prepared = PreparedPlan::new(&plan);
    let rows = probe
        .iter()
        .map(|&t| {
            prepared
                .evaluate(&fit.alpha, &kernels, t)
                .map(|(ft, fs)| vec![t, ft, fs, ft + fs])
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r[2]), hi.max(r[2]))
        });

    let artifact = QuadraticArtifact {
        version: VERSION,
        command: "quadratic",
        trend: &cfg.config.trend,
        seasonal: &cfg.config.seasonal,
        lambda: q.lambda,
        trend_kernel: kernels.trend.method(),
        seasonal_kernel: kernels.seasonal.method(),
        alpha: &fit.alpha,
        residual_norm: residual_norm(&fitted, &y),
        fitted,
        relative_residual: fit.relative_residual,
        jitter: fit.jitter,
        seasonal_spread: hi - lo,
    };
    let artifacts = vec![
        write_json(&out, "quadratic.json", &artifact)?,
        write_csv(&out, "evaluation.csv", &EVAL_HEADER, rows)?,
    ];
    Ok(Outcome {
        code: 0,
        summary: format!(
            "quadratic: {} coefficients, residual {:.3e}, seasonal spread {:.3e}",
            fit.alpha.len(),
            artifact.residual_norm,
            artifact.seasonal_spread
        ),
        artifacts,
    })
}

pub fn converge(cfg: &Loaded, ov: &Overrides) -> Result<Outcome> {
    let (trend, seasonal) = cfg.operators()?;
    let solver = cfg.solver()?;
    let ladder = cfg.ladder()?;
    let rungs = ladder.rungs()?;
    let (plan, y) = cfg.data()?;
    let out = cfg.out_dir(ov.out.as_deref());

    let opts = LadderOptions {
        probe: cfg.config.probe.range.unwrap_or(ladder.window),
        probe_points: ov
            .probe_points
            .or(cfg.config.probe.points)
            .unwrap_or(MIN_PROBE_POINTS),
        monotone_slack: ladder.monotone_slack,
        warm_start: ladder.warm_start,
    };
    let problem = LadderProblem {
        trend,
        seasonal,
        plan,
        y,
        window: ladder.window,
        margin: ladder.margin,
        solver: solver.clone(),
    };
    let report = run_gamma_ladder(&problem, &rungs, &opts)?;
    let mut json = report.to_json();
    json.push('\n');
    let artifacts = vec![
        crate::io::write_atomic(&out, "convergence.json", json.as_bytes())?,
        crate::io::write_atomic(&out, "convergence.csv", report.to_csv().as_bytes())?,
    ];
    let certified = report.rungs.iter().filter(|r| r.certified()).count();
    let monotone = match report.monotone {
        Some(true) => "monotone",
        Some(false) => "NOT monotone",
        None => "monotonicity not checked (ladder is not nested)",
    };
    Ok(Outcome {
        code: if report.passed() { 0 } else { 3 },
        summary: format!(
            "converge: {certified}/{} rungs certified, {monotone}, {:.1} s",
            report.rungs.len(),
            report.total_seconds
        ),
        artifacts,
    })
}

#[derive(Serialize)]
struct TruthArtifact<'a> {
    version: &'static str,
    trend: &'a OperatorKind,
    seasonal: &'a OperatorKind,
    truth: &'a GroundTruth,
}

fn sample_points(plan: &[SensingFunctional]) -> Option<Vec<f64>> {
    plan.iter()
        .map(|phi| match phi.kind() {
            SensingKind::Sampling { x } => Some(*x),
            _ => None,
        })
        .collect()
}

pub fn simulate(cfg: &Loaded, ov: &Overrides) -> Result<Outcome> {
    let (trend, seasonal) = cfg.operators()?;
    let sim = cfg.simulation()?;
    let plan = sim.plan()?;
    let seed = ov.seed.unwrap_or(sim.seed);
    let probe = probe_grid(cfg, ov, plan_extent(&plan), DEFAULT_PROBE_POINTS)?;
    let out = cfg.out_dir(ov.out.as_deref());

    let model = SyntheticModel::new(&trend, &seasonal, sim.truth.clone())?;
    let data = model.simulate(&plan, sim.sigma, seed)?;
    let rows = probe
        .iter()
        .map(|&t| model.eval(t).map(|(ft, fs)| vec![t, ft, fs, ft + fs]))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let measurements = Measurements {
        version: VERSION.into(),
        plan: plan.iter().map(|p| p.kind().clone()).collect(),
        y: data.y.clone(),
        clean: Some(data.clean.clone()),
        sigma: Some(data.sigma),
        seed: Some(seed),
    };
    let truth = TruthArtifact {
        version: VERSION,
        trend: &cfg.config.trend,
        seasonal: &cfg.config.seasonal,
        truth: model.truth(),
    };
    let mut artifacts = Vec::new();
    if let Some(ts) = sample_points(&plan) {
        let rows = ts.iter().zip(&data.y).map(|(&t, &y)| vec![t, y]);
        artifacts.push(write_csv(&out, "dataset.csv", &["t", "y"], rows)?);
    }
    artifacts.push(write_json(&out, "measurements.json", &measurements)?);
    artifacts.push(write_json(&out, "truth.json", &truth)?);
    artifacts.push(write_csv(&out, "truth_evaluation.csv", &EVAL_HEADER, rows)?);
    Ok(Outcome {
        code: 0,
        summary: format!(
            "simulate: {} measurements, sigma {}, seed {seed}",
            data.y.len(),
            data.sigma
        ),
        artifacts,
    })
}

pub fn run(verb: &str, config: &Path, ov: &Overrides) -> Result<Outcome> {
    let cfg = Loaded::from_path(config)?;
    match verb {
        "fit" => fit(&cfg, ov),
        "quadratic" => quadratic(&cfg, ov),
        "converge" => converge(&cfg, ov),
        "simulate" => simulate(&cfg, ov),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}
