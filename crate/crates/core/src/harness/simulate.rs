use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dictionary::{check_plan_admissible, SpaceCase};
use crate::error::{Error, Result};
use crate::operators::{
    fractional_part, trend_derivative_order, truncated_power, FourierConfig, OperatorSpec,
    PeriodicGreen,
};
use crate::sensing::{
    apply_to_seasonal_atom, apply_to_trend_atom, SeasonalAtom, SensingFunctional, TrendAtom,
};

/// Continuous-domain ground truth `f_0 = f_{0,T} + f_{0,S}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub trend_knots: Vec<f64>,
    pub trend_weights: Vec<f64>,
    /// Polynomial coefficients, one per power `0..N_T`.
    #[serde(default)]
    pub poly: Vec<f64>,
    pub seasonal_knots: Vec<f64>,
    pub seasonal_weights: Vec<f64>,
    /// Seasonal constant; required exactly when the trend is invertible and
    /// the seasonal operator is not.
    #[serde(default)]
    pub alpha: Option<f64>,
}

/// Measurements of a ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// Noise-free measurements.
    pub clean: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

/// A ground truth bound to its operators, ready for evaluation and sensing.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    trend: OperatorSpec,
    seasonal: OperatorSpec,
    green: PeriodicGreen,
    truth: GroundTruth,
}

impl SyntheticModel {
    pub fn new(trend: &OperatorSpec, seasonal: &OperatorSpec, truth: GroundTruth) -> Result<Self> {
        let green = PeriodicGreen::new(seasonal, FourierConfig::default())?;
        let model = Self {
            trend: trend.clone(),
            seasonal: seasonal.clone(),
            green,
            truth,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let t = &self.truth;
        if t.trend_knots.len() != t.trend_weights.len() {
            return Err(Error::Validation(format!(
                "{} trend knots but {} trend weights",
                t.trend_knots.len(),
                t.trend_weights.len()
            )));
        }
        if t.seasonal_knots.len() != t.seasonal_weights.len() {
            return Err(Error::Validation(format!(
                "{} seasonal knots but {} seasonal weights",
                t.seasonal_knots.len(),
                t.seasonal_weights.len()
            )));
        }
        let all = t
            .trend_knots
            .iter()
            .chain(&t.trend_weights)
            .chain(&t.poly)
            .chain(&t.seasonal_knots)
            .chain(&t.seasonal_weights)
            .chain(&t.alpha);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "ground truth has non-finite entries".into(),
            ));
        }
        let n_t = self.trend.order() as usize;
        if t.poly.len() != n_t {
            return Err(Error::Validation(format!(
                "trend null space has dimension {n_t} but {} polynomial coefficients were given",
                t.poly.len()
            )));
        }
        let case = SpaceCase::from_orders(self.trend.order(), self.seasonal.order());
        let needs_alpha = case == SpaceCase::TrendInvertibleSeasonalNot;
        if t.alpha.is_some() != needs_alpha {
            return Err(Error::Validation(format!(
                "seasonal constant must be {} for this operator pair",
                if needs_alpha { "present" } else { "absent" }
            )));
        }
        if case != SpaceCase::BothInvertible {
            let sum: f64 = t.seasonal_weights.iter().sum();
            let scale: f64 = t
                .seasonal_weights
                .iter()
                .map(|w| w.abs())
                .sum::<f64>()
                .max(1.0);
            if sum.abs() > 1e-12 * scale {
                return Err(Error::Validation(format!(
                    "seasonal weights must sum to zero, got {sum:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// `(f_{0,T}(t), f_{0,S}(t))`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let g = &self.truth;
        let mut ft = 0.0;
        if !g.trend_knots.is_empty() {
            let n = trend_derivative_order(&self.trend)?;
            for (&u, &w) in g.trend_knots.iter().zip(&g.trend_weights) {
                ft += w * truncated_power(t - u, n);
            }
        }
        for (p, &c) in g.poly.iter().enumerate() {
            ft += c * t.powi(p as i32);
        }
        let mut fs = g.alpha.unwrap_or(0.0);
        let s = fractional_part(t);
        for (&v, &w) in g.seasonal_knots.iter().zip(&g.seasonal_weights) {
            fs += w * self.green.eval(s - v)?;
        }
        Ok((ft, fs))
    }

    /// `φ(f_{0,T} + f_{0,S})`, accumulated in the same order as [`Self::eval`].
    pub fn measure(&self, phi: &SensingFunctional) -> Result<f64> {
        let g = &self.truth;
        let mut ft = 0.0;
        for (&knot, &w) in g.trend_knots.iter().zip(&g.trend_weights) {
            ft += w * apply_to_trend_atom(phi, &self.trend, TrendAtom::Green { knot })?;
        }
        for (p, &c) in g.poly.iter().enumerate() {
            ft +=
                c * apply_to_trend_atom(phi, &self.trend, TrendAtom::Monomial { power: p as u32 })?;
        }
        let mut fs = match g.alpha {
            Some(alpha) => {
                alpha * apply_to_seasonal_atom(phi, &self.green, SeasonalAtom::Constant)?
            }
            None => 0.0,
        };
        for (&knot, &w) in g.seasonal_knots.iter().zip(&g.seasonal_weights) {
            fs += w * apply_to_seasonal_atom(phi, &self.green, SeasonalAtom::Green { knot })?;
        }
        Ok(ft + fs)
    }

    /// `y_ℓ = φ_ℓ(f_0) + σ g_ℓ` with standard normal `g` drawn from a seeded ChaCha8 stream.
    pub fn simulate(&self, plan: &[SensingFunctional], sigma: f64, seed: u64) -> Result<Dataset> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Validation(format!(
                "noise level must be nonnegative, got {sigma}"
            )));
        }
        if plan.is_empty() {
            return Err(Error::Validation("sensing plan is empty".into()));
        }
        check_plan_admissible(&self.trend, &self.seasonal, plan)?;
        let clean: Vec<f64> = plan
            .iter()
            .map(|phi| self.measure(phi))
            .collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = clean
            .iter()
            .map(|&c| {
                let g: f64 = StandardNormal.sample(&mut rng);
                c + sigma * g
            })
            .collect();
        Ok(Dataset {
            y,
            clean,
            sigma,
            seed,
        })
    }
}

/// Simulates noisy measurements of `truth` under `plan`.
pub fn simulate(
    trend: &OperatorSpec,
    seasonal: &OperatorSpec,
    truth: &GroundTruth,
    plan: &[SensingFunctional],
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    SyntheticModel::new(trend, seasonal, truth.clone())?.simulate(plan, sigma, seed)
}
