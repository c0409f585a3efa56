//! Grid-discretized generalized-TV reconstruction with a quadratic loss:
//!
//! ```text
//! min ‖y - A x‖² + λ_T ‖a‖₁ + λ_S ‖b‖₁    subject to Σ b = 0 (when active)
//! ```
//!
//! where `x = (a, c, b, α)` stacks the blocks of a [`Dictionary`] and `A` is
//! its design matrix.
//!
//! [`Dictionary`]: crate::dictionary::Dictionary

mod kkt;
mod prox;
mod solver;
mod support;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dictionary::{l1, BlockLayout, DesignMatrix};

pub use kkt::{kkt_check, zero_solution_thresholds, KktReport};
pub use prox::{prox_l1_zero_sum, soft_threshold};
pub use solver::{solve_tv, solve_tv_from, SolveTrace, SolverConfig, StepRule};
pub use support::{extract_support, RefitStatus, SupportReport, WeightedKnot};

/// Coefficient blocks identifying a discretized pair `(f_T, f_S)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSolution {
    /// Weights of the trend Green atoms.
    pub a: Vec<f64>,
    /// Polynomial coefficients, `c[m]` multiplies `t^m`.
    pub c: Vec<f64>,
    /// Weights of the periodic Green atoms.
    pub b: Vec<f64>,
    /// Seasonal constant, present only for an invertible trend with a
    /// non-invertible seasonal operator.
    pub alpha: Option<f64>,
    pub objective: f64,
}

impl CompositeSolution {
    pub fn zeros(layout: &BlockLayout) -> Self {
        Self {
            a: vec![0.0; layout.trend.len()],
            c: vec![0.0; layout.poly.len()],
            b: vec![0.0; layout.seasonal.len()],
            alpha: layout.constant.map(|_| 0.0),
            objective: 0.0,
        }
    }

    /// Splits a stacked coefficient vector along `layout`.
    pub fn from_vector(x: &[f64], layout: &BlockLayout) -> Self {
        Self {
            a: x[layout.trend.clone()].to_vec(),
            c: x[layout.poly.clone()].to_vec(),
            b: x[layout.seasonal.clone()].to_vec(),
            alpha: layout.constant.map(|j| x[j]),
            objective: 0.0,
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v: Vec<f64> = Vec::with_capacity(self.a.len() + self.c.len() + self.b.len() + 1);
        v.extend(&self.a);
        v.extend(&self.c);
        v.extend(&self.b);
        v.extend(self.alpha);
        DVector::from_vec(v)
    }

    /// `‖y - A x‖² + λ_T ‖a‖₁ + λ_S ‖b‖₁` evaluated from the stored blocks.
    pub fn compute_objective(
        &self,
        design: &DesignMatrix,
        y: &[f64],
        lambda_t: f64,
        lambda_s: f64,
    ) -> f64 {
        let x = self.to_vector();
        let fit = &design.matrix * x;
        let loss: f64 = fit.iter().zip(y).map(|(f, yi)| (yi - f) * (yi - f)).sum();
        loss + lambda_t * l1(&self.a) + lambda_s * l1(&self.b)
    }

    pub fn is_zero(&self) -> bool {
        self.a
            .iter()
            .chain(&self.c)
            .chain(&self.b)
            .chain(self.alpha.iter())
            .all(|&v| v == 0.0)
    }
}
