//! Finite atom sets of the grid-discretized native space and the design
//! matrix pairing every atom with every measurement.
//!
//! With trend grid `h_T` and seasonal grid `h_S = 1/n_S`, an element is
//!
//! ```text
//! f_T(t) = Σ_k a_k ψ(t - k h_T) + Σ_m c_m t^m          (m < N_T)
//! f_S(t) = Σ_k b_k ρ(t - k h_S) + α                    (α only if N_T = 0 < N_S)
//! ```
//!
//! with `Σ b_k = 0` unless both operators are invertible. The trend index
//! set is truncated to the data window plus a margin.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{fractional_part, FourierConfig, OperatorSpec, PeriodicGreen, Role};
use crate::sensing::{
    apply_to_seasonal_atom, apply_to_trend_atom, SeasonalAtom, SensingFunctional, TrendAtom,
};
use crate::tv::CompositeSolution;

/// Grid parameters of the discretized search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h_t: f64,
    /// Trend window `[lo, hi]` on which atoms are placed (before the margin).
    pub window: (f64, f64),
    /// Extra trend atoms on each side; defaults to `ceil(2 / h_t)`.
    #[serde(default)]
    pub margin: Option<usize>,
    pub n_s: usize,
}

impl GridSpec {
    pub fn new(h_t: f64, window: (f64, f64), margin: Option<usize>, n_s: usize) -> Result<Self> {
        let g = Self {
            h_t,
            window,
            margin,
            n_s,
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds a grid from a seasonal spacing, which must be the reciprocal of an integer.
    pub fn with_seasonal_spacing(
        h_t: f64,
        window: (f64, f64),
        margin: Option<usize>,
        h_s: f64,
    ) -> Result<Self> {
        if !(h_s > 0.0) || !h_s.is_finite() {
            return Err(Error::Validation(format!(
                "seasonal spacing must be positive, got {h_s}"
            )));
        }
        let n = (1.0 / h_s).round();
        if n < 1.0 || (1.0 / h_s - n).abs() > 1e-9 * n {
            return Err(Error::Validation(format!(
                "1/h_S = {} is not an integer",
                1.0 / h_s
            )));
        }
        Self::new(h_t, window, margin, n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_t > 0.0) || !self.h_t.is_finite() {
            return Err(Error::Validation(format!(
                "h_T must be positive, got {}",
                self.h_t
            )));
        }
        let (lo, hi) = self.window;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Validation(format!(
                "trend window [{lo}, {hi}] is invalid"
            )));
        }
        if self.n_s == 0 {
            return Err(Error::Validation("n_S must be a positive integer".into()));
        }
        Ok(())
    }

    pub fn h_s(&self) -> f64 {
        1.0 / self.n_s as f64
    }

    pub fn margin_atoms(&self) -> usize {
        self.margin
            .unwrap_or_else(|| (2.0 / self.h_t).ceil() as usize)
    }

    /// Integer indices `k` of trend knots `k * h_T`.
    pub fn trend_indices(&self) -> Range<i64> {
        let m = self.margin_atoms() as f64;
        let (lo, hi) = self.window;
        let first = ((lo / self.h_t) - m - 1e-9).ceil() as i64;
        let last = ((hi / self.h_t) + m + 1e-9).floor() as i64;
        first..last + 1
    }
}

/// Which null-space convention applies, from the operator orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceCase {
    /// `N_T = N_S = 0`.
    BothInvertible,
    /// `N_T >= 1`.
    TrendOrderPositive,
    /// `N_T = 0`, `N_S >= 1`.
    TrendInvertibleSeasonalNot,
}

impl SpaceCase {
    pub fn from_orders(n_t: u32, n_s: u32) -> Self {
        match (n_t, n_s) {
            (0, 0) => SpaceCase::BothInvertible,
            (0, _) => SpaceCase::TrendInvertibleSeasonalNot,
            _ => SpaceCase::TrendOrderPositive,
        }
    }
}

/// Column ranges of the design matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub trend: Range<usize>,
    pub poly: Range<usize>,
    pub seasonal: Range<usize>,
    pub constant: Option<usize>,
    /// Whether seasonal weights are constrained to sum to zero.
    pub zero_sum: bool,
}

impl BlockLayout {
    pub fn columns(&self) -> usize {
        self.constant.map_or(self.seasonal.end, |c| c + 1)
    }

    /// Columns that carry no penalty (polynomials and the constant).
    pub fn unregularized(&self) -> Vec<usize> {
        self.poly.clone().chain(self.constant).collect()
    }
}

/// The discretized search space for an operator pair and grid.
#[derive(Debug, Clone)]
pub struct Dictionary {
    trend: OperatorSpec,
    seasonal: OperatorSpec,
    grid: GridSpec,
    case: SpaceCase,
    trend_indices: Vec<i64>,
    trend_knots: Vec<f64>,
    poly_powers: Vec<u32>,
    seasonal_knots: Vec<f64>,
    green: PeriodicGreen,
    layout: BlockLayout,
}

/// JSON description of a dictionary.
#[derive(Debug, Clone, Serialize)]
pub struct DictionaryDescription<'a> {
    pub trend: &'a OperatorSpec,
    pub seasonal: &'a OperatorSpec,
    pub grid: &'a GridSpec,
    pub case: SpaceCase,
    pub trend_knots: &'a [f64],
    pub poly_powers: &'a [u32],
    pub seasonal_knots: &'a [f64],
    pub layout: &'a BlockLayout,
}

/// Builds the discretized search space with default Fourier settings.
pub fn build_dictionary(
    trend: &OperatorSpec,
    seasonal: &OperatorSpec,
    grid: &GridSpec,
) -> Result<Dictionary> {
    Dictionary::new(trend, seasonal, grid, FourierConfig::default())
}

impl Dictionary {
    pub fn new(
        trend: &OperatorSpec,
        seasonal: &OperatorSpec,
        grid: &GridSpec,
        fourier: FourierConfig,
    ) -> Result<Self> {
        if trend.role != Role::Trend || seasonal.role != Role::Seasonal {
            return Err(Error::Validation(
                "operator pair must be (trend, seasonal)".into(),
            ));
        }
        trend.kind.validate()?;
        seasonal.kind.validate()?;
        grid.validate()?;
        let n_t = trend.order();
        let case = SpaceCase::from_orders(n_t, seasonal.order());
        let trend_indices: Vec<i64> = grid.trend_indices().collect();
        let trend_knots: Vec<f64> = trend_indices.iter().map(|&k| k as f64 * grid.h_t).collect();
        let poly_powers: Vec<u32> = (0..n_t).collect();
        let seasonal_knots: Vec<f64> = (0..grid.n_s).map(|k| k as f64 / grid.n_s as f64).collect();
        let green = PeriodicGreen::new(seasonal, fourier)?;

        let t_end = trend_knots.len();
        let p_end = t_end + poly_powers.len();
        let s_end = p_end + seasonal_knots.len();
        let constant = (case == SpaceCase::TrendInvertibleSeasonalNot).then_some(s_end);
        let layout = BlockLayout {
            trend: 0..t_end,
            poly: t_end..p_end,
            seasonal: p_end..s_end,
            constant,
            zero_sum: case != SpaceCase::BothInvertible,
        };
        Ok(Self {
            trend: trend.clone(),
            seasonal: seasonal.clone(),
            grid: grid.clone(),
            case,
            trend_indices,
            trend_knots,
            poly_powers,
            seasonal_knots,
            green,
            layout,
        })
    }

    pub fn trend_operator(&self) -> &OperatorSpec {
        &self.trend
    }

    pub fn seasonal_operator(&self) -> &OperatorSpec {
        &self.seasonal
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn case(&self) -> SpaceCase {
        self.case
    }

    pub fn trend_knots(&self) -> &[f64] {
        &self.trend_knots
    }

    /// Integer grid indices `k` with knot `k * h_T`.
    pub fn trend_indices(&self) -> &[i64] {
        &self.trend_indices
    }

    pub fn poly_powers(&self) -> &[u32] {
        &self.poly_powers
    }

    pub fn seasonal_knots(&self) -> &[f64] {
        &self.seasonal_knots
    }

    pub fn has_constant(&self) -> bool {
        self.layout.constant.is_some()
    }

    pub fn zero_sum(&self) -> bool {
        self.layout.zero_sum
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn periodic_green(&self) -> &PeriodicGreen {
        &self.green
    }

    pub fn describe(&self) -> DictionaryDescription<'_> {
        DictionaryDescription {
            trend: &self.trend,
            seasonal: &self.seasonal,
            grid: &self.grid,
            case: self.case,
            trend_knots: &self.trend_knots,
            poly_powers: &self.poly_powers,
            seasonal_knots: &self.seasonal_knots,
            layout: &self.layout,
        }
    }

    fn check_admissible(&self, plan: &[SensingFunctional]) -> Result<()> {
        check_plan_admissible(&self.trend, &self.seasonal, plan)
    }

    /// Row of the design matrix for one functional.
    pub fn row(&self, phi: &SensingFunctional) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.layout.columns());
        for &u in &self.trend_knots {
            row.push(apply_to_trend_atom(
                phi,
                &self.trend,
                TrendAtom::Green { knot: u },
            )?);
        }
        for &p in &self.poly_powers {
            row.push(apply_to_trend_atom(
                phi,
                &self.trend,
                TrendAtom::Monomial { power: p },
            )?);
        }
        for &v in &self.seasonal_knots {
            row.push(apply_to_seasonal_atom(
                phi,
                &self.green,
                SeasonalAtom::Green { knot: v },
            )?);
        }
        if self.has_constant() {
            row.push(apply_to_seasonal_atom(
                phi,
                &self.green,
                SeasonalAtom::Constant,
            )?);
        }
        Ok(row)
    }

    /// `f_T(t)` for coefficient blocks `a` (trend knots) and `c` (monomials).
    pub fn trend_value(&self, a: &[f64], c: &[f64], t: f64) -> Result<f64> {
        let mut v = 0.0;
        if a.iter().any(|&x| x != 0.0) {
            let n = crate::operators::trend_derivative_order(&self.trend)?;
            for (&w, &u) in a.iter().zip(&self.trend_knots) {
                if w != 0.0 {
                    v += w * crate::operators::truncated_power(t - u, n);
                }
            }
        }
        for (&w, &p) in c.iter().zip(&self.poly_powers) {
            v += w * t.powi(p as i32);
        }
        Ok(v)
    }

    /// `f_S(t)` for seasonal weights `b` and the optional constant.
    pub fn seasonal_value(&self, b: &[f64], alpha: Option<f64>, t: f64) -> Result<f64> {
        let mut v = alpha.unwrap_or(0.0);
        let s = fractional_part(t);
        for (&w, &knot) in b.iter().zip(&self.seasonal_knots) {
            if w != 0.0 {
                v += w * self.green.eval(s - knot)?;
            }
        }
        Ok(v)
    }

    pub fn check_solution_shape(&self, sol: &CompositeSolution) -> Result<()> {
        let ok = sol.a.len() == self.trend_knots.len()
            && sol.c.len() == self.poly_powers.len()
            && sol.b.len() == self.seasonal_knots.len()
            && sol.alpha.is_some() == self.has_constant();
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "solution blocks (a={}, c={}, b={}, alpha={}) do not match dictionary (a={}, c={}, b={}, alpha={})",
                sol.a.len(),
                sol.c.len(),
                sol.b.len(),
                sol.alpha.is_some(),
                self.trend_knots.len(),
                self.poly_powers.len(),
                self.seasonal_knots.len(),
                self.has_constant()
            )))
        }
    }
}

pub(crate) fn check_plan_admissible(
    trend: &OperatorSpec,
    seasonal: &OperatorSpec,
    plan: &[SensingFunctional],
) -> Result<()> {
    let trend_ok = trend.kind.admits_point_evaluation();
    let seasonal_ok = seasonal.kind.admits_point_evaluation();
    for (index, phi) in plan.iter().enumerate() {
        if !phi.is_sampling() {
            continue;
        }
        let rule = if !trend_ok {
            format!(
                "{} with N_T={}: point evaluation needs a continuous trend Green's function",
                phi.describe(),
                trend.order()
            )
        } else if !seasonal_ok {
            format!(
                "{} with N_S={}: point evaluation needs a continuous periodic Green's function",
                phi.describe(),
                seasonal.order()
            )
        } else {
            continue;
        };
        return Err(Error::Inadmissible { index, rule });
    }
    Ok(())
}

/// Block-structured `L × K` matrix of atom/functional pairings.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    pub layout: BlockLayout,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Comma-separated dump, one row per functional, with a block-labelled header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let label = |j: usize| {
            if self.layout.trend.contains(&j) {
                format!("trend{}", j - self.layout.trend.start)
            } else if self.layout.poly.contains(&j) {
                format!("poly{}", j - self.layout.poly.start)
            } else if self.layout.seasonal.contains(&j) {
                format!("seasonal{}", j - self.layout.seasonal.start)
            } else {
                "constant".to_string()
            }
        };
        let header: Vec<String> = (0..self.cols()).map(label).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.rows() {
            let row: Vec<String> = (0..self.cols())
                .map(|j| format!("{:e}", self.matrix[(i, j)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Pairs every functional of `plan` with every atom of `dict`.
pub fn assemble(dict: &Dictionary, plan: &[SensingFunctional]) -> Result<DesignMatrix> {
    if plan.is_empty() {
        return Err(Error::Validation("sensing plan is empty".into()));
    }
    dict.check_admissible(plan)?;
    let rows: Vec<Vec<f64>> = plan
        .par_iter()
        .map(|phi| dict.row(phi))
        .collect::<Result<_>>()?;
    let k = dict.layout.columns();
    let matrix = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "design matrix has non-finite entries".into(),
        ));
    }
    Ok(DesignMatrix {
        matrix,
        layout: dict.layout.clone(),
    })
}

/// `(f_T(t), f_S(t))` of a solution expressed in the dictionary's atoms.
pub fn evaluate_solution(dict: &Dictionary, sol: &CompositeSolution, t: f64) -> Result<(f64, f64)> {
    dict.check_solution_shape(sol)?;
    Ok((
        dict.trend_value(&sol.a, &sol.c, t)?,
        dict.seasonal_value(&sol.b, sol.alpha, t)?,
    ))
}

/// `λ_T ‖a‖₁ + λ_S ‖b‖₁`, the generalized-TV penalty of a discretized solution.
pub fn regularization(sol: &CompositeSolution, lambda_t: f64, lambda_s: f64) -> f64 {
    lambda_t * l1(&sol.a) + lambda_s * l1(&sol.b)
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Native-space `p`-norm expressed on coefficient blocks; `p = f64::INFINITY`
/// gives the max-combination.
pub fn composite_norm(dict: &Dictionary, sol: &CompositeSolution, p: f64) -> Result<f64> {
    dict.check_solution_shape(sol)?;
    if !(p >= 1.0) {
        return Err(Error::Validation(format!(
            "norm exponent must be >= 1, got {p}"
        )));
    }
    let (first, second) = match dict.case {
        SpaceCase::BothInvertible => (l1(&sol.a), l1(&sol.b)),
        SpaceCase::TrendOrderPositive => (l1(&sol.a) + l2(&sol.c), l1(&sol.b)),
        SpaceCase::TrendInvertibleSeasonalNot => {
            (l1(&sol.a), l1(&sol.b) + sol.alpha.unwrap_or(0.0).abs())
        }
    };
    Ok(if p.is_infinite() {
        first.max(second)
    } else {
        (first.powf(p) + second.powf(p)).powf(1.0 / p)
    })
}
