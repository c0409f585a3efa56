use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dictionary::{
    assemble, build_dictionary, evaluate_solution, l1, l2, Dictionary, GridSpec,
};
use crate::error::{Error, Result};
use crate::operators::{factorial, OperatorSpec};
use crate::sensing::SensingFunctional;
use crate::tv::{kkt_check, solve_tv_from, CompositeSolution, KktReport, SolverConfig};

/// Minimum number of uniform probe points for sup-norm differences.
pub const MIN_PROBE_POINTS: usize = 2048;

/// Grid spacings of one rung.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rung {
    pub h_t: f64,
    pub n_s: usize,
}

/// Dyadic ladder `h_T = h0 / 2^k`, `n_S = n0 * 2^k` for `k < rungs`.
pub fn dyadic_ladder(h0: f64, n0: usize, rungs: usize) -> Vec<Rung> {
    (0..rungs)
        .map(|k| Rung {
            h_t: h0 / (1u64 << k) as f64,
            n_s: n0 << k,
        })
        .collect()
}

/// The continuous problem shared by every rung.
#[derive(Debug, Clone)]
pub struct LadderProblem {
    pub trend: OperatorSpec,
    pub seasonal: OperatorSpec,
    pub plan: Vec<SensingFunctional>,
    pub y: Vec<f64>,
    /// Trend window on which knots are placed.
    pub window: (f64, f64),
    /// Width of the extra knot band on each side of the window.
    pub margin: f64,
    /// Solver settings, including both λ's.
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderOptions {
    /// Interval `[a, b]` on which trend differences are measured.
    pub probe: (f64, f64),
    #[serde(default = "default_probe_points")]
    pub probe_points: usize,
    /// Allowed objective increase between nested rungs, relative to `max(1, J)`.
    #[serde(default = "default_slack")]
    pub monotone_slack: f64,
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

fn default_probe_points() -> usize {
    MIN_PROBE_POINTS
}

fn default_slack() -> f64 {
    1e-9
}

fn default_true() -> bool {
    true
}

impl LadderOptions {
    pub fn new(probe: (f64, f64)) -> Self {
        Self {
            probe,
            probe_points: MIN_PROBE_POINTS,
            monotone_slack: default_slack(),
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RungStatus {
    Converged,
    /// Iteration budget exhausted; the best iterate is kept.
    NotConverged,
    /// No solution (e.g. an ill-posed rung).
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub h_t: f64,
    pub n_s: usize,
    pub columns: usize,
    pub status: RungStatus,
    pub message: Option<String>,
    pub objective: Option<f64>,
    pub kkt: Option<KktReport>,
    pub iterations: usize,
    pub seconds: f64,
    pub a_l1: Option<f64>,
    pub b_l1: Option<f64>,
    /// `‖a‖₁ + ‖b‖₁ <= ‖y‖² / min(λ_T, λ_S)`.
    pub l1_bound_holds: Option<bool>,
    /// `‖a‖₁ Lip(ψ on [a, b]) + ‖c‖₂ (polynomial bound)`, for derivative trends of order >= 2.
    pub lipschitz: Option<f64>,
    pub solution: Option<CompositeSolution>,
}

impl RungReport {
    pub fn certified(&self) -> bool {
        self.kkt.as_ref().is_some_and(|k| k.verdict)
    }
}

/// Outcome of a grid-refinement ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub version: String,
    pub probe: (f64, f64),
    pub probe_points: usize,
    /// Whether every rung's knots contain the previous rung's knots.
    pub nested: bool,
    /// `J` non-increasing within slack; `None` when the ladder is not nested.
    pub monotone: Option<bool>,
    pub monotone_slack: f64,
    /// `‖y‖² / min(λ_T, λ_S)`.
    pub l1_bound: f64,
    pub rungs: Vec<RungReport>,
    /// `sup |f_T^{k+1} - f_T^k|` on the probe interval, one entry per consecutive pair.
    pub trend_differences: Vec<Option<f64>>,
    /// `sup |f_S^{k+1} - f_S^k|` on the circle.
    pub seasonal_differences: Vec<Option<f64>>,
    pub total_seconds: f64,
}

impl ConvergenceReport {
    /// All rungs certified and, for nested ladders, monotone.
    pub fn passed(&self) -> bool {
        self.rungs.iter().all(RungReport::certified) && self.monotone != Some(false)
    }

    pub fn objectives(&self) -> Vec<Option<f64>> {
        self.rungs.iter().map(|r| r.objective).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per rung; inter-grid differences sit on the finer rung of each pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "rung,h_t,n_s,columns,status,objective,kkt_verdict,iterations,seconds,a_l1,b_l1,l1_bound_holds,lipschitz,trend_diff,seasonal_diff\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for (k, r) in self.rungs.iter().enumerate() {
            let diff = |d: &[Option<f64>]| if k == 0 { String::new() } else { opt(d[k - 1]) };
            let status = match r.status {
                RungStatus::Converged => "converged",
                RungStatus::NotConverged => "not_converged",
                RungStatus::Failed => "failed",
            };
            out.push_str(&format!(
                "{k},{:e},{},{},{status},{},{},{},{:.6},{},{},{},{},{},{}\n",
                r.h_t,
                r.n_s,
                r.columns,
                opt(r.objective),
                r.kkt
                    .as_ref()
                    .map(|k| k.verdict.to_string())
                    .unwrap_or_default(),
                r.iterations,
                r.seconds,
                opt(r.a_l1),
                opt(r.b_l1),
                r.l1_bound_holds.map(|b| b.to_string()).unwrap_or_default(),
                opt(r.lipschitz),
                diff(&self.trend_differences),
                diff(&self.seasonal_differences),
            ));
        }
        out
    }
}

fn check_ladder(ladder: &[Rung]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Validation("ladder has no rungs".into()));
    }
    for w in ladder.windows(2) {
        let (c, f) = (w[0], w[1]);
        let refines = f.h_t <= c.h_t && f.n_s >= c.n_s && (f.h_t < c.h_t || f.n_s > c.n_s);
        if !refines {
            return Err(Error::Validation(format!(
                "ladder is not refining: (h_T={}, n_S={}) follows (h_T={}, n_S={})",
                f.h_t, f.n_s, c.h_t, c.n_s
            )));
        }
    }
    Ok(())
}

fn grid_for(problem: &LadderProblem, rung: Rung) -> Result<GridSpec> {
    let margin = (problem.margin / rung.h_t - 1e-9).ceil().max(0.0) as usize;
    GridSpec::new(rung.h_t, problem.window, Some(margin), rung.n_s)
}

fn knot_key(x: f64, h: f64) -> i64 {
    (x / h).round() as i64
}

/// Fine-knot index of every coarse knot, or `None` when some coarse knot is missing.
fn embed(coarse: &[f64], fine: &[f64], h: f64) -> Option<Vec<usize>> {
    let index: HashMap<i64, usize> = fine
        .iter()
        .enumerate()
        .map(|(i, &x)| (knot_key(x, h), i))
        .collect();
    coarse
        .iter()
        .map(|&x| {
            let key = knot_key(x, h);
            index
                .get(&key)
                .copied()
                .filter(|&i| (fine[i] - x).abs() <= 1e-9 * h.max(x.abs() * 1e-3))
        })
        .collect()
}

struct Embedding {
    trend: Vec<usize>,
    seasonal: Vec<usize>,
}

fn nested_embedding(coarse: &Dictionary, fine: &Dictionary) -> Option<Embedding> {
    let h_t = fine.grid().h_t;
    let h_s = fine.grid().h_s();
    Some(Embedding {
        trend: embed(coarse.trend_knots(), fine.trend_knots(), h_t)?,
        seasonal: embed(coarse.seasonal_knots(), fine.seasonal_knots(), h_s)?,
    })
}

fn transfer(sol: &CompositeSolution, map: &Embedding, fine: &Dictionary) -> CompositeSolution {
    let mut out = CompositeSolution::zeros(fine.layout());
    for (&w, &i) in sol.a.iter().zip(&map.trend) {
        out.a[i] = w;
    }
    for (&w, &i) in sol.b.iter().zip(&map.seasonal) {
        out.b[i] = w;
    }
    out.c.clone_from(&sol.c);
    out.alpha = sol.alpha;
    out
}

fn lipschitz_estimate(
    dict: &Dictionary,
    sol: &CompositeSolution,
    probe: (f64, f64),
) -> Option<f64> {
    let n = dict.trend_operator().kind.pure_derivative_order()?;
    if n < 2 {
        return None;
    }
    let u_min = dict.trend_knots().first().copied().unwrap_or(probe.0);
    let reach = (probe.1 - u_min).max(0.0);
    let psi_lip = reach.powi(n as i32 - 2) / factorial(n - 2);
    let m = probe.0.abs().max(probe.1.abs());
    let poly: f64 = (1..sol.c.len())
        .map(|p| (p as f64 * m.powi(p as i32 - 1)).powi(2))
        .sum::<f64>()
        .sqrt();
    Some(l1(&sol.a) * psi_lip + l2(&sol.c) * poly)
}

fn probe_grid(lo: f64, hi: f64, points: usize, extra: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    xs.extend(extra.filter(|&x| x >= lo && x <= hi));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Active knots of both solutions are added to the uniform probe points, so
/// the sup of piecewise-linear differences is exact.
fn sup_differences(
    coarse: (&Dictionary, &CompositeSolution),
    fine: (&Dictionary, &CompositeSolution),
    opts: &LadderOptions,
) -> Result<(f64, f64)> {
    let active = |d: &Dictionary, w: &[f64], knots: &[f64]| -> Vec<f64> {
        let _ = d;
        knots
            .iter()
            .zip(w)
            .filter(|(_, &v)| v != 0.0)
            .map(|(&k, _)| k)
            .collect()
    };
    let trend_knots: Vec<f64> = active(coarse.0, &coarse.1.a, coarse.0.trend_knots())
        .into_iter()
        .chain(active(fine.0, &fine.1.a, fine.0.trend_knots()))
        .collect();
    let seasonal_knots: Vec<f64> = active(coarse.0, &coarse.1.b, coarse.0.seasonal_knots())
        .into_iter()
        .chain(active(fine.0, &fine.1.b, fine.0.seasonal_knots()))
        .collect();
    let (a, b) = opts.probe;
    let mut dt: f64 = 0.0;
    for t in probe_grid(a, b, opts.probe_points, trend_knots.into_iter()) {
        let (c, _) = evaluate_solution(coarse.0, coarse.1, t)?;
        let (f, _) = evaluate_solution(fine.0, fine.1, t)?;
        dt = dt.max((f - c).abs());
    }
    let mut ds: f64 = 0.0;
    let circle = probe_grid(0.0, 1.0, opts.probe_points + 1, seasonal_knots.into_iter());
    for &t in circle.iter().filter(|&&t| t < 1.0) {
        let (_, c) = evaluate_solution(coarse.0, coarse.1, t)?;
        let (_, f) = evaluate_solution(fine.0, fine.1, t)?;
        ds = ds.max((f - c).abs());
    }
    Ok((dt, ds))
}

/// Solves the discretized problem on every rung and records objectives,
/// certificates and inter-grid differences. A failing rung is recorded and
/// the ladder continues.
pub fn run_gamma_ladder(
    problem: &LadderProblem,
    ladder: &[Rung],
    opts: &LadderOptions,
) -> Result<ConvergenceReport> {
    check_ladder(ladder)?;
    problem.solver.validate()?;
    let (a, b) = opts.probe;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Validation(format!(
            "probe interval [{a}, {b}] is invalid"
        )));
    }
    if opts.probe_points < MIN_PROBE_POINTS {
        return Err(Error::Validation(format!(
            "at least {MIN_PROBE_POINTS} probe points are required, got {}",
            opts.probe_points
        )));
    }
    if !(problem.margin >= 0.0) {
        return Err(Error::Validation(format!(
            "margin must be nonnegative, got {}",
            problem.margin
        )));
    }
    let cfg = &problem.solver;
    let l1_bound = problem.y.iter().map(|v| v * v).sum::<f64>() / cfg.lambda_t.min(cfg.lambda_s);

    let start = Instant::now();
    let mut dicts: Vec<Dictionary> = Vec::with_capacity(ladder.len());
    let mut rungs: Vec<RungReport> = Vec::with_capacity(ladder.len());
    let mut nested = true;
    for (k, &rung) in ladder.iter().enumerate() {
        let dict = build_dictionary(&problem.trend, &problem.seasonal, &grid_for(problem, rung)?)?;
        let embedding = dicts.last().and_then(|prev| nested_embedding(prev, &dict));
        if k > 0 && embedding.is_none() {
            nested = false;
        }
        let design = assemble(&dict, &problem.plan)?;
        let warm = match (&embedding, rungs.last().and_then(|r| r.solution.as_ref())) {
            (Some(map), Some(prev)) if opts.warm_start => Some(transfer(prev, map, &dict)),
            _ => None,
        };
        let t0 = Instant::now();
        let outcome = solve_tv_from(&design, &problem.y, cfg, warm.as_ref());
        let seconds = t0.elapsed().as_secs_f64();
        let (status, message, solution, iterations) = match outcome {
            Ok((sol, trace)) => (RungStatus::Converged, None, Some(sol), trace.iterations),
            Err(Error::NotConverged {
                iterations, best, ..
            }) => (
                RungStatus::NotConverged,
                Some(format!("no convergence after {iterations} iterations")),
                Some(*best),
                iterations,
            ),
            Err(e) => (RungStatus::Failed, Some(e.to_string()), None, 0),
        };
        let kkt = solution
            .as_ref()
            .map(|s| kkt_check(s, &design, &problem.y, cfg));
        let a_l1 = solution.as_ref().map(|s| l1(&s.a));
        let b_l1 = solution.as_ref().map(|s| l1(&s.b));
        rungs.push(RungReport {
            h_t: rung.h_t,
            n_s: rung.n_s,
            columns: design.cols(),
            status,
            message,
            objective: solution.as_ref().map(|s| s.objective),
            kkt,
            iterations,
            seconds,
            a_l1,
            b_l1,
            l1_bound_holds: a_l1
                .zip(b_l1)
                .map(|(x, y)| x + y <= l1_bound * (1.0 + 1e-12)),
            lipschitz: solution
                .as_ref()
                .and_then(|s| lipschitz_estimate(&dict, s, opts.probe)),
            solution,
        });
        dicts.push(dict);
    }

    let mut trend_differences = Vec::with_capacity(ladder.len().saturating_sub(1));
    let mut seasonal_differences = Vec::with_capacity(ladder.len().saturating_sub(1));
    for k in 1..rungs.len() {
        match (&rungs[k - 1].solution, &rungs[k].solution) {
            (Some(c), Some(f)) => {
                let (dt, ds) = sup_differences((&dicts[k - 1], c), (&dicts[k], f), opts)?;
                trend_differences.push(Some(dt));
                seasonal_differences.push(Some(ds));
            }
            _ => {
                trend_differences.push(None);
                seasonal_differences.push(None);
            }
        }
    }
    let monotone = nested.then(|| {
        rungs
            .windows(2)
            .all(|w| match (w[0].objective, w[1].objective) {
                (Some(c), Some(f)) => f <= c + opts.monotone_slack * c.abs().max(1.0),
                _ => false,
            })
    });
    Ok(ConvergenceReport {
        version: "v1".into(),
        probe: opts.probe,
        probe_points: opts.probe_points,
        nested,
        monotone,
        monotone_slack: opts.monotone_slack,
        l1_bound,
        rungs,
        trend_differences,
        seasonal_differences,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}
