use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{CompositeSolution, SolverConfig};
use crate::dictionary::{l1, BlockLayout, DesignMatrix};
use crate::linalg;

/// First-order optimality certificate of a discretized solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max_j (|r_j| - λ_T)₊` over trend atoms with `a_j = 0`.
    pub trend_inactive_excess: f64,
    /// Same for seasonal atoms, after the dual shift.
    pub seasonal_inactive_excess: f64,
    /// `max |r_j + λ sign(x_j)|` over all active atoms (seasonal ones shifted).
    pub active_residual: f64,
    /// Multiplier of the zero-sum constraint; 0 when the constraint is inactive.
    pub mu: f64,
    /// `max |r_j|` over the polynomial and constant columns.
    pub unregularized_gradient: f64,
    pub zero_sum_violation: f64,
    pub tol: f64,
    pub verdict: bool,
}

/// Checks `0 ∈ ∂J(x)` up to `cfg.tol_kkt`, with `r = 2 Aᵀ(A x - y)`.
pub fn kkt_check(
    sol: &CompositeSolution,
    design: &DesignMatrix,
    y: &[f64],
    cfg: &SolverConfig,
) -> KktReport {
    let x = sol.to_vector();
    let resid = &design.matrix * &x - DVector::from_column_slice(y);
    let r = design.matrix.tr_mul(&resid) * 2.0;
    kkt_from_gradient(
        r.as_slice(),
        x.as_slice(),
        &design.layout,
        cfg.lambda_t,
        cfg.lambda_s,
        cfg.tol_kkt,
    )
}

pub(crate) fn kkt_from_gradient(
    r: &[f64],
    x: &[f64],
    layout: &BlockLayout,
    lambda_t: f64,
    lambda_s: f64,
    tol: f64,
) -> KktReport {
    let mut trend_inactive: f64 = 0.0;
    let mut active: f64 = 0.0;
    for j in layout.trend.clone() {
        if x[j] == 0.0 {
            trend_inactive = trend_inactive.max(r[j].abs() - lambda_t);
        } else {
            active = active.max((r[j] + lambda_t * x[j].signum()).abs());
        }
    }

    let rs = &r[layout.seasonal.clone()];
    let bs = &x[layout.seasonal.clone()];
    let mu = if layout.zero_sum {
        optimal_shift(rs, bs, lambda_s)
    } else {
        0.0
    };
    let (seasonal_inactive, seasonal_active) = seasonal_parts(rs, bs, lambda_s, mu);
    active = active.max(seasonal_active);

    let unregularized = layout
        .unregularized()
        .iter()
        .map(|&j| r[j].abs())
        .fold(0.0, f64::max);
    let (zero_sum_violation, zero_sum_ok) = if layout.zero_sum {
        let v = bs.iter().sum::<f64>().abs();
        (v, v <= 1e-9 * l1(bs).max(1.0))
    } else {
        (0.0, true)
    };

    let trend_inactive = trend_inactive.max(0.0);
    let seasonal_inactive = seasonal_inactive.max(0.0);
    let verdict = trend_inactive <= tol
        && seasonal_inactive <= tol
        && active <= tol
        && unregularized <= tol
        && zero_sum_ok
        && r.iter().all(|v| v.is_finite());
    KktReport {
        trend_inactive_excess: trend_inactive,
        seasonal_inactive_excess: seasonal_inactive,
        active_residual: active,
        mu,
        unregularized_gradient: unregularized,
        zero_sum_violation,
        tol,
        verdict,
    }
}

fn seasonal_parts(r: &[f64], b: &[f64], lambda: f64, mu: f64) -> (f64, f64) {
    let mut inactive: f64 = 0.0;
    let mut active: f64 = 0.0;
    for (&rj, &bj) in r.iter().zip(b) {
        let g = rj + mu;
        if bj == 0.0 {
            inactive = inactive.max(g.abs() - lambda);
        } else {
            active = active.max((g + lambda * bj.signum()).abs());
        }
    }
    (inactive, active)
}

/// Minimizer of `μ ↦ max_j (|μ - c_j| - d_j)`, the seasonal violation with
/// `c_j = -r_j, d_j = λ` for inactive atoms and `c_j = -r_j - λ sign(b_j), d_j = 0`
/// for active ones. The maximum of shifted V-shapes is `max(μ - A, B - μ)`
/// with `A = min (c_j + d_j)` and `B = max (c_j - d_j)`.
fn optimal_shift(r: &[f64], b: &[f64], lambda: f64) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    let (mut a, mut bb) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&rj, &bj) in r.iter().zip(b) {
        let (c, d) = if bj == 0.0 {
            (-rj, lambda)
        } else {
            (-rj - lambda * bj.signum(), 0.0)
        };
        a = a.min(c + d);
        bb = bb.max(c - d);
    }
    0.5 * (a + bb)
}

/// Smallest `(λ_T, λ_S)` for which `a = 0, b = 0` is optimal.
///
/// The unregularized blocks are fitted by least squares first; the seasonal
/// threshold accounts for the zero-sum multiplier when that constraint is active.
pub fn zero_solution_thresholds(design: &DesignMatrix, y: &[f64]) -> (f64, f64) {
    let layout = &design.layout;
    let unreg = layout.unregularized();
    let yv = DVector::from_column_slice(y);
    let mut resid = -yv.clone();
    if !unreg.is_empty() {
        let u = design.matrix.select_columns(&unreg);
        let (coef, _) = linalg::lstsq(&u, &yv);
        resid += &u * coef;
    }
    let r = design.matrix.tr_mul(&resid) * 2.0;
    let lt = layout.trend.clone().map(|j| r[j].abs()).fold(0.0, f64::max);
    let rs: Vec<f64> = layout.seasonal.clone().map(|j| r[j]).collect();
    let ls = if rs.is_empty() {
        0.0
    } else if layout.zero_sum {
        let (min, max) = rs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        0.5 * (max - min)
    } else {
        rs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    (lt, ls)
}
