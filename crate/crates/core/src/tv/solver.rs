use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kkt::{kkt_check, KktReport};
use super::prox::{prox_l1_zero_sum_into, soft_threshold};
use super::CompositeSolution;
use crate::dictionary::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg;

const POWER_ITERS: usize = 200;
const POWER_TOL: f64 = 1e-10;
const LIPSCHITZ_SAFETY: f64 = 1.02;
const CHECK_EVERY: usize = 10;
// supports can exceed the row count when the solution set is not a singleton
const POLISH_MAX_FACTOR: usize = 4;

/// How the proximal step length is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `1 / Lip` with `Lip` from power iteration.
    Fixed,
    /// Armijo-style halving from an optimistic initial step.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda_t: f64,
    pub lambda_s: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::tol_obj")]
    pub tol_obj: f64,
    #[serde(default = "defaults::tol_kkt")]
    pub tol_kkt: f64,
    #[serde(default = "defaults::step")]
    pub step: StepRule,
    #[serde(default = "defaults::restart")]
    pub restart: bool,
    /// Length of the window over which the relative objective decrease is measured.
    #[serde(default = "defaults::window")]
    pub window: usize,
}

mod defaults {
    use super::StepRule;

    pub fn max_iters() -> usize {
        200_000
    }
    pub fn tol_obj() -> f64 {
        1e-10
    }
    pub fn tol_kkt() -> f64 {
        1e-6
    }
    pub fn step() -> StepRule {
        StepRule::Fixed
    }
    pub fn restart() -> bool {
        true
    }
    pub fn window() -> usize {
        50
    }
}

impl SolverConfig {
    pub fn new(lambda_t: f64, lambda_s: f64) -> Self {
        Self {
            lambda_t,
            lambda_s,
            max_iters: defaults::max_iters(),
            tol_obj: defaults::tol_obj(),
            tol_kkt: defaults::tol_kkt(),
            step: defaults::step(),
            restart: defaults::restart(),
            window: defaults::window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("lambda_t", self.lambda_t)?;
        positive("lambda_s", self.lambda_s)?;
        positive("tol_obj", self.tol_obj)?;
        positive("tol_kkt", self.tol_kkt)?;
        if self.max_iters == 0 || self.window == 0 {
            return Err(Error::Validation(
                "max_iters and window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: usize,
    /// Lipschitz constant of the smooth part's gradient (after elimination).
    pub lipschitz: f64,
    pub restarts: usize,
    /// Accepted support refinements.
    pub polishes: usize,
    /// Objective after each iteration, starting with the initial point.
    pub history: Vec<f64>,
    pub report: KktReport,
}

/// Minimizes `‖y - A x‖² + λ_T ‖a‖₁ + λ_S ‖b‖₁` (with `Σ b = 0` when active).
pub fn solve_tv(design: &DesignMatrix, y: &[f64], cfg: &SolverConfig) -> Result<CompositeSolution> {
    solve_tv_from(design, y, cfg, None).map(|(sol, _)| sol)
}

/// Like [`solve_tv`], optionally warm-started, and returning the trace.
///
/// The polynomial and constant blocks are eliminated by projecting onto the
/// orthogonal complement of their column span and recovered by least squares,
/// so the accelerated proximal iteration runs on the penalized blocks only.
pub fn solve_tv_from(
    design: &DesignMatrix,
    y: &[f64],
    cfg: &SolverConfig,
    warm: Option<&CompositeSolution>,
) -> Result<(CompositeSolution, SolveTrace)> {
    cfg.validate()?;
    let problem = Reduced::new(design, y)?;
    let mut p = problem.initial(warm)?;

    let (lipschitz, mut step) = match cfg.step {
        StepRule::Fixed => {
            let lip = 2.0
                * linalg::spectral_norm_sq(&problem.at, POWER_ITERS, POWER_TOL)
                * LIPSCHITZ_SAFETY;
            (lip, if lip > 0.0 { 1.0 / lip } else { 1.0 })
        }
        StepRule::Backtracking => {
            let colmax = (0..problem.at.ncols())
                .map(|j| problem.at.column(j).norm_squared())
                .fold(0.0, f64::max);
            let lip = 2.0 * colmax;
            (lip, if lip > 0.0 { 1.0 / lip } else { 1.0 })
        }
    };

    let lt = cfg.lambda_t;
    let ls = cfg.lambda_s;
    let mut fx = problem.objective(&p, lt, ls);
    let mut history = vec![fx];
    let mut yk = p.clone();
    let mut tk = 1.0f64;
    let mut restarts = 0;
    let mut polishes = 0;
    let mut z = DVector::zeros(p.len());

    for k in 1..=cfg.max_iters {
        let g = problem.gradient(&yk);
        match cfg.step {
            StepRule::Fixed => problem.prox(&yk, &g, step, lt, ls, &mut z),
            StepRule::Backtracking => {
                let fy = problem.smooth(&yk);
                loop {
                    problem.prox(&yk, &g, step, lt, ls, &mut z);
                    let d = &z - &yk;
                    let model = fy + g.dot(&d) + d.norm_squared() / (2.0 * step);
                    if problem.smooth(&z) <= model + 1e-12 * fy.abs().max(1.0) || step < 1e-300 {
                        break;
                    }
                    step *= 0.5;
                }
            }
        }
        let fz = problem.objective(&z, lt, ls);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        if fz <= fx {
            // monotone accelerated step
            let x_prev = std::mem::replace(&mut p, z.clone());
            fx = fz;
            yk = &p + (&p - &x_prev) * ((tk - 1.0) / t_next);
            tk = t_next;
        } else if cfg.restart {
            restarts += 1;
            yk.copy_from(&p);
            tk = 1.0;
        } else {
            yk = &p + (&z - &p) * (tk / t_next);
            tk = t_next;
        }
        history.push(fx);

        if k % CHECK_EVERY != 0 {
            continue;
        }
        if let Some(polished) = problem.polish(&p, lt, ls) {
            let fp = problem.objective(&polished, lt, ls);
            if fp <= fx {
                p = polished;
                fx = fp;
                *history.last_mut().expect("history is never empty") = fx;
                yk.copy_from(&p);
                tk = 1.0;
                polishes += 1;
            }
        }
        if k >= cfg.window {
            let old = history[history.len() - 1 - cfg.window];
            if old - fx <= cfg.tol_obj * fx.abs().max(f64::MIN_POSITIVE) {
                let sol = problem.expand(&p, lt, ls);
                // stationarity is also required relative to the penalty scale, so
                // that small λ's do not make the absolute tolerance meaningless
                let strict = SolverConfig {
                    tol_kkt: cfg.tol_kkt * lt.min(ls).min(1.0),
                    ..cfg.clone()
                };
                if kkt_check(&sol, design, y, &strict).verdict {
                    let report = kkt_check(&sol, design, y, cfg);
                    let trace = SolveTrace {
                        iterations: k,
                        lipschitz,
                        restarts,
                        polishes,
                        history,
                        report,
                    };
                    return Ok((sol, trace));
                }
            }
        }
    }

    let best = problem.expand(&p, lt, ls);
    let report = kkt_check(&best, design, y, cfg);
    Err(Error::NotConverged {
        iterations: cfg.max_iters,
        best: Box::new(best),
        report: Box::new(report),
    })
}

/// The problem restricted to the penalized blocks `p = (a, b)`.
struct Reduced<'a> {
    design: &'a DesignMatrix,
    y: DVector<f64>,
    /// `(I - QQᵀ) A_p`.
    at: DMatrix<f64>,
    /// `(I - QQᵀ) y`.
    yt: DVector<f64>,
    /// Penalized column indices in design order: trend then seasonal.
    penalized: Vec<usize>,
    n_trend: usize,
    zero_sum: bool,
    unreg: Vec<usize>,
    /// Pseudo-inverse of the unregularized columns.
    unreg_pinv: DMatrix<f64>,
}

impl<'a> Reduced<'a> {
    fn new(design: &'a DesignMatrix, y: &[f64]) -> Result<Self> {
        let layout = &design.layout;
        if y.len() != design.rows() {
            return Err(Error::Validation(format!(
                "{} measurements for a design with {} rows",
                y.len(),
                design.rows()
            )));
        }
        if y.is_empty() {
            return Err(Error::Validation("no measurements".into()));
        }
        if y.iter().any(|v| !v.is_finite()) || design.matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "measurements and design must be finite".into(),
            ));
        }
        let n_poly = layout.poly.len();
        if design.rows() < n_poly {
            return Err(Error::IllPosed(format!(
                "{} measurements cannot identify a polynomial null space of dimension {n_poly}",
                design.rows()
            )));
        }
        let unreg = layout.unregularized();
        let u = design.matrix.select_columns(&unreg);
        let (q, rank) = linalg::orthonormal_range(&u);
        if rank < unreg.len() {
            return Err(Error::IllPosed(format!(
                "the measurements do not separate the unregularized components: rank {rank} < {}",
                unreg.len()
            )));
        }
        let penalized: Vec<usize> = layout
            .trend
            .clone()
            .chain(layout.seasonal.clone())
            .collect();
        let mut at = design.matrix.select_columns(&penalized);
        let mut yt = DVector::from_column_slice(y);
        if !unreg.is_empty() {
            let coef = q.tr_mul(&at);
            at.gemm(-1.0, &q, &coef, 1.0);
            linalg::project_out(&q, &mut yt);
        }
        let unreg_pinv = if unreg.is_empty() {
            DMatrix::zeros(0, design.rows())
        } else {
            let eps = linalg::RANK_RTOL * u.norm();
            u.pseudo_inverse(eps)
                .map_err(|e| Error::IllPosed(e.to_string()))?
        };
        Ok(Self {
            design,
            y: DVector::from_column_slice(y),
            at,
            yt,
            penalized,
            n_trend: layout.trend.len(),
            zero_sum: layout.zero_sum,
            unreg,
            unreg_pinv,
        })
    }

    fn initial(&self, warm: Option<&CompositeSolution>) -> Result<DVector<f64>> {
        let mut p = DVector::zeros(self.penalized.len());
        let Some(w) = warm else { return Ok(p) };
        if w.a.len() != self.n_trend || w.a.len() + w.b.len() != p.len() {
            return Err(Error::Validation(
                "warm start does not match the design layout".into(),
            ));
        }
        for (i, v) in w.a.iter().chain(&w.b).enumerate() {
            p[i] = *v;
        }
        if self.zero_sum && !w.b.is_empty() {
            let s: f64 = w.b.iter().sum();
            if s.abs() > 1e-12 * w.b.iter().map(|v| v.abs()).sum::<f64>().max(1.0) {
                let shift = s / w.b.len() as f64;
                for i in self.n_trend..p.len() {
                    p[i] -= shift;
                }
            }
        }
        Ok(p)
    }

    fn smooth(&self, p: &DVector<f64>) -> f64 {
        (&self.at * p - &self.yt).norm_squared()
    }

    fn penalty(&self, p: &DVector<f64>, lt: f64, ls: f64) -> f64 {
        let (t, s) = p.as_slice().split_at(self.n_trend);
        lt * t.iter().map(|v| v.abs()).sum::<f64>() + ls * s.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn objective(&self, p: &DVector<f64>, lt: f64, ls: f64) -> f64 {
        self.smooth(p) + self.penalty(p, lt, ls)
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        self.at.tr_mul(&(&self.at * p - &self.yt)) * 2.0
    }

    fn prox(
        &self,
        yk: &DVector<f64>,
        g: &DVector<f64>,
        step: f64,
        lt: f64,
        ls: f64,
        out: &mut DVector<f64>,
    ) {
        let v = yk - g * step;
        let n = self.n_trend;
        for i in 0..n {
            out[i] = soft_threshold(v[i], step * lt);
        }
        let (vs, os) = (&v.as_slice()[n..], &mut out.as_mut_slice()[n..]);
        if self.zero_sum {
            prox_l1_zero_sum_into(vs, step * ls, os);
        } else {
            for (o, &x) in os.iter_mut().zip(vs) {
                *o = soft_threshold(x, step * ls);
            }
        }
    }

    /// Solves the stationarity equations on the current support with its signs
    /// fixed, choosing the solution closest to `p` when they are singular.
    /// Returns `None` when no sign-consistent solution exists.
    fn polish(&self, p: &DVector<f64>, lt: f64, ls: f64) -> Option<DVector<f64>> {
        let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] != 0.0).collect();
        if support.is_empty() || support.len() > POLISH_MAX_FACTOR * (self.at.nrows() + 1) {
            return None;
        }
        let k = support.len();
        let seasonal: Vec<bool> = support.iter().map(|&i| i >= self.n_trend).collect();
        let constrained = self.zero_sum && seasonal.iter().any(|&s| s);
        let m = k + usize::from(constrained);

        let a_s = self.at.select_columns(&support);
        let gram = a_s.tr_mul(&a_s) * 2.0;
        let aty = a_s.tr_mul(&self.yt) * 2.0;
        let mut mat = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        mat.view_mut((0, 0), (k, k)).copy_from(&gram);
        for (r, &i) in support.iter().enumerate() {
            let lambda = if seasonal[r] { ls } else { lt };
            rhs[r] = aty[r] - lambda * p[i].signum();
            if constrained && seasonal[r] {
                mat[(r, k)] = 1.0;
                mat[(k, r)] = 1.0;
            }
        }

        let svd = mat.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return None;
        }
        let eps = 1e-12 * smax;
        let particular = svd.solve(&rhs, eps).ok()?;
        let residual = (&mat * &particular - &rhs).norm();
        if residual > 1e-9 * (rhs.norm() + smax * particular.norm()).max(1e-300) {
            return None;
        }
        let mut target = particular.clone();
        for (r, &i) in support.iter().enumerate() {
            target[r] = p[i];
        }
        let v_t = svd.v_t.as_ref()?;
        let mut z = particular;
        for (idx, &s) in svd.singular_values.iter().enumerate() {
            if s <= eps {
                let v = v_t.row(idx).transpose();
                let coef = v.dot(&(&target - &z));
                z.axpy(coef, &v, 1.0);
            }
        }

        let mut out = DVector::zeros(p.len());
        for (r, &i) in support.iter().enumerate() {
            if z[r] * p[i].signum() < 0.0 {
                return None;
            }
            out[i] = z[r];
        }
        if constrained {
            // remove rounding drift from the constraint
            let idx: Vec<usize> = support
                .iter()
                .copied()
                .filter(|&i| i >= self.n_trend)
                .collect();
            let drift = idx.iter().map(|&i| out[i]).sum::<f64>();
            if drift != 0.0 {
                let nonzero: Vec<usize> = idx.into_iter().filter(|&i| out[i] != 0.0).collect();
                let share = drift / nonzero.len().max(1) as f64;
                for i in nonzero {
                    out[i] -= share;
                }
            }
        }
        Some(out)
    }

    /// Recovers the full coefficient vector, fitting the unregularized blocks
    /// by least squares.
    fn expand(&self, p: &DVector<f64>, lt: f64, ls: f64) -> CompositeSolution {
        let layout = &self.design.layout;
        let mut x = DVector::zeros(layout.columns());
        for (&j, &v) in self.penalized.iter().zip(p.iter()) {
            x[j] = v;
        }
        if !self.unreg.is_empty() {
            let partial = &self.y - &self.design.matrix * &x;
            let c = &self.unreg_pinv * partial;
            for (&j, &v) in self.unreg.iter().zip(c.iter()) {
                x[j] = v;
            }
        }
        let mut sol = CompositeSolution::from_vector(x.as_slice(), layout);
        sol.objective = sol.compute_objective(self.design, self.y.as_slice(), lt, ls);
        sol
    }
}
