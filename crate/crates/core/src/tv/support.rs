use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::CompositeSolution;
use crate::dictionary::{DesignMatrix, Dictionary};
use crate::error::{Error, Result};
use crate::linalg;

/// An active atom of the sparse representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedKnot {
    /// Position in its coefficient block.
    pub index: usize,
    pub location: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitStatus {
    Refit,
    /// The support columns were linearly dependent; pre-refit values kept.
    RankDeficient,
    /// The least-squares refit changed a sign; pre-refit values kept.
    SignChange,
    /// Nothing to refit.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub trend: Vec<WeightedKnot>,
    pub seasonal: Vec<WeightedKnot>,
    pub k_t: usize,
    pub k_s: usize,
    /// Upper bound on `K_T + K_S` for extreme points of the solution set.
    pub knot_bound: usize,
    pub within_bound: bool,
    /// Atoms removed by moving along null directions of the support columns.
    pub reductions: usize,
    pub refit: RefitStatus,
    /// Thresholded (and, when successful, refitted) coefficients.
    pub solution: CompositeSolution,
}

/// Keeps atoms with `|coef| > η max|coef|` in their block, removes atoms along
/// directions that leave the fit unchanged and do not increase the penalty,
/// then refits the kept atoms together with the unregularized blocks by
/// least squares.
///
/// `lambdas` orients the removal directions and prices the reported solution.
pub fn extract_support(
    dict: &Dictionary,
    design: &DesignMatrix,
    y: &[f64],
    sol: &CompositeSolution,
    eta: f64,
    lambdas: (f64, f64),
) -> Result<SupportReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Validation(format!(
            "relative threshold must lie in (0, 1), got {eta}"
        )));
    }
    dict.check_solution_shape(sol)?;
    if y.len() != design.rows() {
        return Err(Error::Validation(
            "measurement count does not match the design".into(),
        ));
    }
    let layout = &design.layout;
    let keep_t = significant(&sol.a, eta);
    let keep_s = significant(&sol.b, eta);

    let mut thresholded = CompositeSolution::zeros(layout);
    thresholded.c.clone_from(&sol.c);
    thresholded.alpha = sol.alpha;
    for &i in &keep_t {
        thresholded.a[i] = sol.a[i];
    }
    for &i in &keep_s {
        thresholded.b[i] = sol.b[i];
    }

    let (keep_t, keep_s, reductions) = reduce(design, &mut thresholded, keep_t, keep_s, lambdas);
    let refit = refit(design, y, &keep_t, &keep_s, &thresholded);
    let (mut solution, status) = match refit {
        Ok(refitted) => (refitted, RefitStatus::Refit),
        Err(status) => (thresholded, status),
    };
    solution.objective = solution.compute_objective(design, y, lambdas.0, lambdas.1);

    let l = design.rows();
    let knot_bound = if layout.zero_sum {
        (l + 1).saturating_sub(layout.poly.len())
    } else {
        l
    };
    let trend: Vec<WeightedKnot> = keep_t
        .iter()
        .map(|&i| WeightedKnot {
            index: i,
            location: dict.trend_knots()[i],
            weight: solution.a[i],
        })
        .collect();
    let seasonal: Vec<WeightedKnot> = keep_s
        .iter()
        .map(|&i| WeightedKnot {
            index: i,
            location: dict.seasonal_knots()[i],
            weight: solution.b[i],
        })
        .collect();
    let (k_t, k_s) = (trend.len(), seasonal.len());
    Ok(SupportReport {
        trend,
        seasonal,
        k_t,
        k_s,
        knot_bound,
        within_bound: k_t + k_s <= knot_bound,
        reductions,
        refit: status,
        solution,
    })
}

fn significant(v: &[f64], eta: f64) -> Vec<usize> {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return Vec::new();
    }
    (0..v.len()).filter(|&i| v[i].abs() > eta * max).collect()
}

/// Repeatedly finds `d` with `A d = 0` (and `Σ d_b = 0` when constrained)
/// supported on the kept atoms and the unregularized columns, orients it so
/// the penalty does not increase, and steps until a coefficient vanishes.
fn reduce(
    design: &DesignMatrix,
    sol: &mut CompositeSolution,
    mut keep_t: Vec<usize>,
    mut keep_s: Vec<usize>,
    lambdas: (f64, f64),
) -> (Vec<usize>, Vec<usize>, usize) {
    let layout = &design.layout;
    let unreg = layout.unregularized();
    let mut removed = 0;
    loop {
        let cols: Vec<usize> = keep_t
            .iter()
            .map(|&i| layout.trend.start + i)
            .chain(keep_s.iter().map(|&i| layout.seasonal.start + i))
            .chain(unreg.iter().copied())
            .collect();
        let (kt, ks) = (keep_t.len(), keep_s.len());
        if kt + ks == 0 {
            break;
        }
        let constrained = layout.zero_sum && ks > 0;
        let rows = design.rows() + usize::from(constrained);
        let mut m = DMatrix::zeros(rows, cols.len());
        for (j, &c) in cols.iter().enumerate() {
            m.view_mut((0, j), (design.rows(), 1))
                .copy_from(&design.matrix.column(c));
        }
        if constrained {
            let scale = m.norm().max(1.0);
            for j in kt..kt + ks {
                m[(rows - 1, j)] = scale;
            }
        }
        let Some(d) = null_vector(&m) else { break };

        let coef = |j: usize| {
            if j < kt {
                sol.a[keep_t[j]]
            } else {
                sol.b[keep_s[j - kt]]
            }
        };
        let mut slope = 0.0;
        for j in 0..kt + ks {
            let lambda = if j < kt { lambdas.0 } else { lambdas.1 };
            slope += lambda * coef(j).signum() * d[j];
        }
        let dir = if slope > 0.0 { -1.0 } else { 1.0 };
        // first coefficient driven to zero
        let mut hit: Option<(usize, f64)> = None;
        for j in 0..kt + ks {
            let dj = dir * d[j];
            if dj * coef(j) < 0.0 {
                let tau = -coef(j) / dj;
                if hit.is_none_or(|(_, t)| tau < t) {
                    hit = Some((j, tau));
                }
            }
        }
        let Some((zero, tau)) = hit else {
            if slope != 0.0 {
                break;
            }
            // penalty-neutral direction pointing away from zero: walk the other way
            let flipped = (0..kt + ks)
                .filter(|&j| d[j] * coef(j) > 0.0)
                .map(|j| (j, coef(j) / d[j]))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let Some((zero, tau)) = flipped else { break };
            step_along(sol, &keep_t, &keep_s, &unreg, layout, &d, -tau);
            drop_index(sol, &mut keep_t, &mut keep_s, zero);
            removed += 1;
            continue;
        };
        step_along(sol, &keep_t, &keep_s, &unreg, layout, &d, tau * dir);
        drop_index(sol, &mut keep_t, &mut keep_s, zero);
        removed += 1;
    }
    (keep_t, keep_s, removed)
}

fn step_along(
    sol: &mut CompositeSolution,
    keep_t: &[usize],
    keep_s: &[usize],
    unreg: &[usize],
    layout: &crate::dictionary::BlockLayout,
    d: &DVector<f64>,
    tau: f64,
) {
    let (kt, ks) = (keep_t.len(), keep_s.len());
    for j in 0..kt + ks {
        if j < kt {
            sol.a[keep_t[j]] += tau * d[j];
        } else {
            sol.b[keep_s[j - kt]] += tau * d[j];
        }
    }
    for (j, &c) in unreg.iter().enumerate() {
        let step = tau * d[kt + ks + j];
        if layout.poly.contains(&c) {
            sol.c[c - layout.poly.start] += step;
        } else if let Some(a) = sol.alpha.as_mut() {
            *a += step;
        }
    }
}

fn drop_index(
    sol: &mut CompositeSolution,
    keep_t: &mut Vec<usize>,
    keep_s: &mut Vec<usize>,
    j: usize,
) {
    if j < keep_t.len() {
        sol.a[keep_t[j]] = 0.0;
        keep_t.remove(j);
    } else {
        let j = j - keep_t.len();
        sol.b[keep_s[j]] = 0.0;
        keep_s.remove(j);
    }
}

/// A unit vector of the numerical null space of `m`, if there is one.
fn null_vector(m: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = m.ncols();
    if n == 0 {
        return None;
    }
    // pad to at least square so the SVD exposes the whole null space
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return None;
    }
    let v_t = svd.v_t?;
    let (idx, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &s)| (i, s))?;
    (smin <= linalg::RANK_RTOL * smax).then(|| v_t.row(idx).transpose())
}

/// Least squares over the kept atoms and unregularized columns, with the
/// zero-sum constraint eliminated through the basis `e_i - e_last`.
fn refit(
    design: &DesignMatrix,
    y: &[f64],
    keep_t: &[usize],
    keep_s: &[usize],
    base: &CompositeSolution,
) -> std::result::Result<CompositeSolution, RefitStatus> {
    let layout = &design.layout;
    let unreg = layout.unregularized();
    if keep_t.is_empty() && keep_s.is_empty() && unreg.is_empty() {
        return Err(RefitStatus::Empty);
    }
    let a = &design.matrix;
    let cols_t: Vec<usize> = keep_t.iter().map(|&i| layout.trend.start + i).collect();
    let cols_s: Vec<usize> = keep_s.iter().map(|&i| layout.seasonal.start + i).collect();
    let constrained = layout.zero_sum && !cols_s.is_empty();
    let n_s_free = if constrained {
        cols_s.len() - 1
    } else {
        cols_s.len()
    };

    // reduced design: [A_T | A_U | A_S N]
    let n = cols_t.len() + unreg.len() + n_s_free;
    let mut b = DMatrix::zeros(a.nrows(), n);
    for (j, &c) in cols_t.iter().chain(&unreg).enumerate() {
        b.set_column(j, &a.column(c));
    }
    let off = cols_t.len() + unreg.len();
    for j in 0..n_s_free {
        let mut col = a.column(cols_s[j]).into_owned();
        if constrained {
            col -= a.column(*cols_s.last().expect("constrained implies non-empty"));
        }
        b.set_column(off + j, &col);
    }
    let (z, rank) = linalg::lstsq(&b, &DVector::from_column_slice(y));
    if rank < n {
        return Err(RefitStatus::RankDeficient);
    }

    let mut out = base.clone();
    for (j, &i) in keep_t.iter().enumerate() {
        out.a[i] = z[j];
    }
    for (j, &c) in unreg.iter().enumerate() {
        let v = z[cols_t.len() + j];
        if layout.poly.contains(&c) {
            out.c[c - layout.poly.start] = v;
        } else {
            out.alpha = Some(v);
        }
    }
    let mut last = 0.0;
    for j in 0..n_s_free {
        out.b[keep_s[j]] = z[off + j];
        last -= z[off + j];
    }
    if constrained {
        out.b[*keep_s.last().expect("constrained implies non-empty")] = last;
    }

    let flipped = keep_t.iter().any(|&i| out.a[i] * base.a[i] <= 0.0)
        || keep_s.iter().any(|&i| out.b[i] * base.b[i] <= 0.0);
    if flipped {
        return Err(RefitStatus::SignChange);
    }
    Ok(out)
}
