//! Quadratic (Tikhonov) counterpart of the TV reconstruction:
//!
//! ```text
//! min ‖y - Φ(f_T + f_S)‖² + λ (‖L_T f_T‖² + ‖L_S f_S‖²)
//! ```
//!
//! whose unique solution is `f_T = Σ α_ℓ (φ_ℓ * k_T)`,
//! `f_S = Σ α_ℓ (Per{φ_ℓ} ⊛ k_S)` with `α = (G + λ I)^{-1} y`.

mod kernel;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::{Periodized, SensingFunctional, SensingKind};

pub use kernel::{KernelConfig, KernelMethod, KernelPair, LineKernel};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
const GAUSS_NODES: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Building block of a functional: a weighted Dirac or a linear density on a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Point { x: f64, w: f64 },
    Linear { u0: f64, u1: f64, w0: f64, w1: f64 },
}

impl Piece {
    fn mass(&self) -> f64 {
        match *self {
            Piece::Point { w, .. } => w,
            Piece::Linear { u0, u1, w0, w1 } => 0.5 * (w0 + w1) * (u1 - u0),
        }
    }

    fn shifted(&self, s: f64) -> Self {
        match *self {
            Piece::Point { x, w } => Piece::Point { x: x + s, w },
            Piece::Linear { u0, u1, w0, w1 } => Piece::Linear {
                u0: u0 + s,
                u1: u1 + s,
                w0,
                w1,
            },
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            Piece::Point { x, .. } => (x, x),
            Piece::Linear { u0, u1, .. } => (u0, u1),
        }
    }
}

/// A functional as pieces on the line, or on the circle plus a constant.
#[derive(Debug, Clone, PartialEq)]
struct Pieces {
    constant: f64,
    parts: Vec<Piece>,
}

impl Pieces {
    fn on_line(phi: &SensingFunctional) -> Self {
        let parts = match phi.kind() {
            SensingKind::Sampling { x } => vec![Piece::Point { x: *x, w: 1.0 }],
            SensingKind::Box { start, len } => vec![Piece::Linear {
                u0: *start,
                u1: start + len,
                w0: 1.0,
                w1: 1.0,
            }],
            SensingKind::Density(d) => d
                .values
                .windows(2)
                .enumerate()
                .filter(|(_, w)| w[0] != 0.0 || w[1] != 0.0)
                .map(|(i, w)| Piece::Linear {
                    u0: d.start + i as f64 * d.step,
                    u1: d.start + (i + 1) as f64 * d.step,
                    w0: w[0],
                    w1: w[1],
                })
                .collect(),
        };
        Self {
            constant: 0.0,
            parts,
        }
    }

    fn on_circle(phi: &SensingFunctional) -> Self {
        match phi.periodized() {
            Periodized::Comb { offset } => Self {
                constant: 0.0,
                parts: vec![Piece::Point { x: *offset, w: 1.0 }],
            },
            Periodized::Box {
                count,
                arc_start,
                arc_len,
            } => Self {
                constant: *count,
                parts: if *arc_len > 0.0 {
                    vec![Piece::Linear {
                        u0: *arc_start,
                        u1: arc_start + arc_len,
                        w0: 1.0,
                        w1: 1.0,
                    }]
                } else {
                    Vec::new()
                },
            },
            Periodized::Tabulated {
                origin,
                step,
                left,
                right,
            } => Self {
                constant: 0.0,
                parts: left
                    .iter()
                    .zip(right)
                    .enumerate()
                    .map(|(c, (&w0, &w1))| Piece::Linear {
                        u0: origin + c as f64 * step,
                        u1: origin + (c + 1) as f64 * step,
                        w0,
                        w1,
                    })
                    .collect(),
            },
        }
    }

    fn mass(&self) -> f64 {
        self.parts.iter().map(Piece::mass).sum()
    }
}

/// `∫ p(u) k(x - u) du` for a single piece, exact through the primitives.
fn point_pairing(k: &LineKernel, x: f64, p: &Piece) -> f64 {
    match *p {
        Piece::Point { x: y, w } => w * k.k(x - y),
        Piece::Linear { u0, u1, w0, w1 } => {
            if u1 <= u0 {
                return 0.0;
            }
            let slope = (w1 - w0) / (u1 - u0);
            w0 * k.k1(x - u0) - w1 * k.k1(x - u1) + slope * (k.k2(x - u0) - k.k2(x - u1))
        }
    }
}

/// `∫∫ p(s) q(u) k(s - u) ds du`.
fn piece_pairing(k: &LineKernel, p: &Piece, q: &Piece) -> f64 {
    match (*p, *q) {
        (Piece::Point { x, w }, other) | (other, Piece::Point { x, w }) => {
            w * point_pairing(k, x, &other)
        }
        (
            Piece::Linear {
                u0: a,
                u1: b,
                w0,
                w1,
            },
            Piece::Linear {
                u0: c,
                u1: d,
                w0: v0,
                w1: v1,
            },
        ) => {
            if b <= a || d <= c {
                return 0.0;
            }
            if w0 == w1 && v0 == v1 {
                return w0 * v0 * (k.k2(b - c) - k.k2(b - d) - k.k2(a - c) + k.k2(a - d));
            }
            // outer Gauss-Legendre over the cell, split where the inner
            // integral loses smoothness
            let mut cuts = vec![a, b];
            for t in [c, d] {
                if t > a && t < b {
                    cuts.push(t);
                }
            }
            cuts.sort_by(f64::total_cmp);
            let slope = (w1 - w0) / (b - a);
            let mut acc = 0.0;
            for seg in cuts.windows(2) {
                let (lo, hi) = (seg[0], seg[1]);
                let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (t, wt) in GAUSS_NODES {
                    let s = mid + half * t;
                    acc += wt * half * (w0 + slope * (s - a)) * point_pairing(k, s, q);
                }
            }
            acc
        }
    }
}

fn line_pairing(k: &LineKernel, p: &Pieces, q: &Pieces) -> f64 {
    let mut acc = 0.0;
    for a in &p.parts {
        for b in &q.parts {
            acc += piece_pairing(k, a, b);
        }
    }
    acc
}

/// Periodic pairing through Poisson summation; constants pair through the
/// unit mean of the periodic kernel.
fn circle_pairing(kernels: &KernelPair, p: &Pieces, q: &Pieces) -> f64 {
    let k = &kernels.seasonal;
    let reach = k.reach() + 1.0;
    let mut acc = p.constant * q.constant + p.constant * q.mass() + q.constant * p.mass();
    for a in &p.parts {
        let (alo, ahi) = a.bounds();
        for b in &q.parts {
            let (blo, bhi) = b.bounds();
            for n in kernels.shifts() {
                let s = n as f64;
                // skip shifts whose pieces are farther apart than the kernel reach
                if alo - (bhi + s) > reach || (blo + s) - ahi > reach {
                    continue;
                }
                acc += piece_pairing(k, a, &b.shifted(s));
            }
        }
    }
    acc
}

/// `G[i, j] = ⟨φ_i, φ_j * k_T⟩ + ⟨Per φ_i, Per φ_j ⊛ k_S⟩`.
///
/// Entries are computed once for `i <= j` and mirrored, so the result is
/// exactly symmetric.
pub fn gram(plan: &[SensingFunctional], kernels: &KernelPair) -> Result<DMatrix<f64>> {
    if plan.is_empty() {
        return Err(Error::Validation("sensing plan is empty".into()));
    }
    let line: Vec<Pieces> = plan.iter().map(Pieces::on_line).collect();
    let circle: Vec<Pieces> = plan.iter().map(Pieces::on_circle).collect();
    let l = plan.len();
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|i| (i..l).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            line_pairing(&kernels.trend, &line[i], &line[j])
                + circle_pairing(kernels, &circle[i], &circle[j])
        })
        .collect();
    let mut g = DMatrix::zeros(l, l);
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        if !v.is_finite() {
            return Err(Error::Validation(format!(
                "Gram entry ({i}, {j}) is not finite"
            )));
        }
        g[(i, j)] = v;
        g[(j, i)] = v;
    }
    Ok(g)
}

/// Coefficients of the quadratic reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub alpha: Vec<f64>,
    pub lambda: f64,
    /// `‖(G + λI) α - y‖ / ‖y‖` after refinement.
    pub relative_residual: f64,
    /// Diagonal shift added on top of `λ` to obtain a factorization.
    pub jitter: f64,
}

/// Solves `(G + λ I) α = y` by Cholesky with one step of iterative refinement.
pub fn solve_quadratic(g: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<QuadraticFit> {
    let l = g.nrows();
    if g.ncols() != l || y.len() != l {
        return Err(Error::Validation(format!(
            "Gram matrix is {}x{} but there are {} measurements",
            g.nrows(),
            g.ncols(),
            y.len()
        )));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let rhs = DVector::from_column_slice(y);
    let mut system = g.clone();
    for i in 0..l {
        system[(i, i)] += lambda;
    }
    let scale = (g.trace().abs() / l.max(1) as f64).max(lambda);
    let mut jitter = 0.0;
    let chol = loop {
        let mut m = system.clone();
        for i in 0..l {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            break c;
        }
        jitter = if jitter == 0.0 {
            1e-14 * scale
        } else {
            jitter * 10.0
        };
        if jitter > 1e-6 * scale {
            return Err(Error::Conditioning { jitter });
        }
    };
    let mut alpha = chol.solve(&rhs);
    let r = &rhs - &system * &alpha;
    alpha += chol.solve(&r);
    let residual = (&rhs - &system * &alpha).norm();
    let ynorm = rhs.norm();
    Ok(QuadraticFit {
        alpha: alpha.as_slice().to_vec(),
        lambda,
        relative_residual: if ynorm > 0.0 {
            residual / ynorm
        } else {
            residual
        },
        jitter,
    })
}

/// `(f_T(t), f_S(t))` of the quadratic reconstruction.
pub fn evaluate_quadratic(
    alpha: &[f64],
    plan: &[SensingFunctional],
    kernels: &KernelPair,
    t: f64,
) -> Result<(f64, f64)> {
    let prepared = PreparedPlan::new(plan);
    prepared.evaluate(alpha, kernels, t)
}

/// Pieces of a plan, converted once for repeated evaluation.
#[derive(Debug, Clone)]
pub struct PreparedPlan {
    line: Vec<Pieces>,
    circle: Vec<Pieces>,
}

impl PreparedPlan {
    pub fn new(plan: &[SensingFunctional]) -> Self {
        Self {
            line: plan.iter().map(Pieces::on_line).collect(),
            circle: plan.iter().map(Pieces::on_circle).collect(),
        }
    }

    pub fn evaluate(&self, alpha: &[f64], kernels: &KernelPair, t: f64) -> Result<(f64, f64)> {
        if alpha.len() != self.line.len() {
            return Err(Error::Validation(format!(
                "{} coefficients for {} functionals",
                alpha.len(),
                self.line.len()
            )));
        }
        let point = Pieces {
            constant: 0.0,
            parts: vec![Piece::Point { x: t, w: 1.0 }],
        };
        let circle_point = Pieces {
            constant: 0.0,
            parts: vec![Piece::Point {
                x: crate::operators::fractional_part(t),
                w: 1.0,
            }],
        };
        let mut ft = 0.0;
        let mut fs = 0.0;
        for (i, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            ft += a * line_pairing(&kernels.trend, &point, &self.line[i]);
            fs += a * circle_pairing(kernels, &circle_point, &self.circle[i]);
        }
        Ok((ft, fs))
    }
}
