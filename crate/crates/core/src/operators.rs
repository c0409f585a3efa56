//! Trend- and seasonal-admissible regularization operators, their frequency
//! responses, and their (periodic) Green's functions.
//!
//! Trend operators act on functions of the real line and factor as `D^N`
//! composed with an invertible part; `N` is the admissibility order and the
//! null space is the polynomials of degree below `N`. Seasonal operators act
//! on 1-periodic functions; a positive order means the null space is the
//! constants and the periodic Green's function is normalized to zero mean.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether an operator regularizes the trend (line) or seasonal (circle) part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Trend,
    Seasonal,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Trend => "trend",
            Role::Seasonal => "seasonal",
        }
    }
}

/// Shape of a shift-invariant operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OperatorKind {
    /// `D^order`, `order >= 1`.
    Derivative { order: u32 },
    /// `(Id - Δ)^{gamma/2}`, frequency response `(1 + ω²)^{gamma/2}`.
    Sobolev { gamma: f64 },
    /// Composition of factors. An empty composition is the identity.
    Composition { factors: Vec<OperatorKind> },
}

impl OperatorKind {
    pub fn derivative(order: u32) -> Self {
        OperatorKind::Derivative { order }
    }

    pub fn sobolev(gamma: f64) -> Self {
        OperatorKind::Sobolev { gamma }
    }

    pub fn composition(factors: Vec<OperatorKind>) -> Self {
        OperatorKind::Composition { factors }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OperatorKind::Derivative { order: 0 } => Err(Error::InvalidOperator(
                "derivative of order 0; use an empty composition for the identity".into(),
            )),
            OperatorKind::Derivative { .. } => Ok(()),
            OperatorKind::Sobolev { gamma } if !gamma.is_finite() || *gamma < 0.0 => {
                Err(Error::InvalidOperator(format!(
                    "sobolev exponent must be finite and >= 0, got {gamma}"
                )))
            }
            OperatorKind::Sobolev { .. } => Ok(()),
            OperatorKind::Composition { factors } => factors.iter().try_for_each(|f| f.validate()),
        }
    }

    /// Admissibility order: total number of derivative factors.
    pub fn order(&self) -> u32 {
        match self {
            OperatorKind::Derivative { order } => *order,
            OperatorKind::Sobolev { .. } => 0,
            OperatorKind::Composition { factors } => factors.iter().map(|f| f.order()).sum(),
        }
    }

    /// Sum of Sobolev exponents over all factors.
    fn sobolev_total(&self) -> f64 {
        match self {
            OperatorKind::Derivative { .. } => 0.0,
            OperatorKind::Sobolev { gamma } => *gamma,
            OperatorKind::Composition { factors } => {
                factors.iter().map(|f| f.sobolev_total()).sum()
            }
        }
    }

    /// Exponent `s` such that `|L̂(ω)| >= |ω|^s` for every real `ω`.
    pub fn decay_exponent(&self) -> f64 {
        self.order() as f64 + self.sobolev_total()
    }

    /// `Some(N)` when the operator is exactly `D^N` (identity factors allowed).
    pub fn pure_derivative_order(&self) -> Option<u32> {
        if self.sobolev_total() == 0.0 && self.order() >= 1 {
            Some(self.order())
        } else {
            None
        }
    }

    fn response(&self, omega: f64) -> Complex64 {
        match self {
            OperatorKind::Derivative { order } => Complex64::new(0.0, omega).powu(*order),
            OperatorKind::Sobolev { gamma } => {
                Complex64::new((1.0 + omega * omega).powf(gamma / 2.0), 0.0)
            }
            OperatorKind::Composition { factors } => factors
                .iter()
                .fold(Complex64::new(1.0, 0.0), |acc, f| acc * f.response(omega)),
        }
    }

    /// Conservative test for `δ` belonging to the predual of this operator:
    /// derivative part of order at least 2, or (no derivative part) total
    /// Sobolev exponent above 1.
    pub(crate) fn admits_point_evaluation(&self) -> bool {
        let n = self.order();
        if n >= 1 {
            n >= 2
        } else {
            self.sobolev_total() > 1.0
        }
    }
}

/// An operator together with the role it plays in the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub role: Role,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, role: Role) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, role })
    }

    pub fn trend(kind: OperatorKind) -> Result<Self> {
        Self::new(kind, Role::Trend)
    }

    pub fn seasonal(kind: OperatorKind) -> Result<Self> {
        Self::new(kind, Role::Seasonal)
    }

    pub fn order(&self) -> u32 {
        self.kind.order()
    }

    pub fn is_invertible(&self) -> bool {
        self.order() == 0
    }

    fn expect_role(&self, role: Role) -> Result<()> {
        if self.role == role {
            Ok(())
        } else {
            Err(Error::RoleMismatch {
                expected: role.name(),
                got: self.role.name(),
            })
        }
    }
}

/// Admissibility order of a (possibly unvalidated) operator description.
pub fn admissibility_order(kind: &OperatorKind) -> Result<u32> {
    kind.validate()?;
    Ok(kind.order())
}

/// Frequency response `L̂(ω)` of a trend operator.
pub fn frequency_response(spec: &OperatorSpec, omega: f64) -> Result<Complex64> {
    spec.expect_role(Role::Trend)?;
    Ok(spec.kind.response(omega))
}

/// Frequency sequence `L̂[n]` of a seasonal operator, i.e. the response at `2πn`.
pub fn frequency_sequence(spec: &OperatorSpec, n: i64) -> Result<Complex64> {
    spec.expect_role(Role::Seasonal)?;
    Ok(spec.kind.response(2.0 * PI * n as f64))
}

/// `t₊^{n-1} / (n-1)!`, the causal Green's function of `D^n`.
///
/// For `n = 1` this is the right-continuous Heaviside step.
pub fn truncated_power(t: f64, n: u32) -> f64 {
    debug_assert!(n >= 1);
    if n == 1 {
        return if t >= 0.0 { 1.0 } else { 0.0 };
    }
    if t <= 0.0 {
        return 0.0;
    }
    let k = n - 1;
    t.powi(k as i32) / factorial(k)
}

/// `∫_{-∞}^{t} truncated_power(s, n) ds = t₊^n / n!`.
pub fn truncated_power_integral(t: f64, n: u32) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        t.powi(n as i32) / factorial(n)
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Evaluates the causal Green's function of a trend operator at `t`.
pub fn trend_green_eval(spec: &OperatorSpec, t: f64) -> Result<f64> {
    spec.expect_role(Role::Trend)?;
    let n = trend_derivative_order(spec)?;
    Ok(truncated_power(t, n))
}

pub(crate) fn trend_derivative_order(spec: &OperatorSpec) -> Result<u32> {
    spec.kind.pure_derivative_order().ok_or_else(|| {
        Error::Unsupported(format!(
            "closed-form trend Green's function is only available for pure derivatives, got {:?}",
            spec.kind
        ))
    })
}

/// Whether point evaluation is a continuous measurement for the pair.
///
/// Derivative pairs need orders `>= 2` on both sides and Sobolev pairs need
/// exponents `> 1`. The condition separates into a trend-side and a
/// seasonal-side test; compositions with a derivative part are judged on
/// that part alone, ignoring extra Sobolev smoothing.
pub fn sampling_admissible(trend: &OperatorSpec, seasonal: &OperatorSpec) -> Result<bool> {
    trend.expect_role(Role::Trend)?;
    seasonal.expect_role(Role::Seasonal)?;
    Ok(trend.kind.admits_point_evaluation() && seasonal.kind.admits_point_evaluation())
}

// Bernoulli numbers B_0..B_8 with B_1 = -1/2.
const BERNOULLI_NUMBERS: [f64; 9] = [
    1.0,
    -0.5,
    1.0 / 6.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    1.0 / 42.0,
    0.0,
    -1.0 / 30.0,
];

/// Highest derivative order handled by the Bernoulli closed form.
pub const BERNOULLI_MAX_ORDER: u32 = 6;

/// Bernoulli polynomial `B_n(x)` for `n <= 8`.
pub fn bernoulli_polynomial(n: u32, x: f64) -> f64 {
    assert!(n <= 8, "bernoulli polynomial order {n} not tabulated");
    // B_n(x) = sum_k C(n,k) B_k x^{n-k}; Horner over descending powers of x.
    let mut acc = 0.0;
    let mut binom = 1.0;
    let mut coeffs = [0.0; 9];
    for k in 0..=n {
        coeffs[k as usize] = binom * BERNOULLI_NUMBERS[k as usize];
        binom = binom * f64::from(n - k) / f64::from(k + 1);
    }
    // coeffs[k] multiplies x^{n-k}
    for k in 0..=n as usize {
        acc = acc * x + coeffs[k];
    }
    acc
}

fn frac(t: f64) -> f64 {
    let f = t - t.floor();
    // t - floor(t) can round up to exactly 1 for tiny negative t
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Fractional part in `[0, 1)`.
pub fn fractional_part(t: f64) -> f64 {
    frac(t)
}

/// Truncation settings for Fourier-series evaluation of periodic functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierConfig {
    /// Number of positive frequencies kept.
    pub terms: usize,
    /// Maximum admissible tail bound.
    pub tail_tol: f64,
}

impl Default for FourierConfig {
    fn default() -> Self {
        Self {
            terms: 2048,
            tail_tol: 1e-4,
        }
    }
}

/// A Fourier-series value together with the rigorous bound on its truncation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Real 1-periodic function `c0 + 2 Re Σ_{n=1}^{M} coef[n] e^{2πint}` whose
/// coefficient magnitudes decrease with a fixed phase and satisfy
/// `|coef[n]| <= (2πn)^{-decay}`.
#[derive(Debug, Clone)]
struct TruncatedSeries {
    c0: f64,
    coefs: Vec<Complex64>,
    decay: f64,
}

impl TruncatedSeries {
    fn tail_bound(&self, t: f64) -> f64 {
        let m = self.coefs.len() as f64;
        let absolute = if self.decay > 1.0 {
            2.0 * (2.0 * PI).powf(-self.decay) * m.powf(1.0 - self.decay) / (self.decay - 1.0)
        } else {
            f64::INFINITY
        };
        // Abel summation with |Σ_{a..b} e^{2πint}| <= 1/|sin πt|.
        let next = (2.0 * PI * (m + 1.0)).powf(-self.decay);
        let s = (PI * frac(t)).sin().abs();
        let dirichlet = if s > 0.0 {
            2.0 * next / s
        } else {
            f64::INFINITY
        };
        absolute.min(dirichlet)
    }

    fn eval(&self, t: f64) -> SeriesValue {
        let theta = 2.0 * PI * frac(t);
        let step = Complex64::from_polar(1.0, theta);
        let mut z = step;
        let mut sum = 0.0;
        for (k, c) in self.coefs.iter().enumerate() {
            // re-anchor the rotation periodically to bound drift
            if k % 256 == 255 {
                z = Complex64::from_polar(1.0, theta * (k + 1) as f64);
            }
            sum += (c * z).re;
            z *= step;
        }
        SeriesValue {
            value: self.c0 + 2.0 * sum,
            tail_bound: self.tail_bound(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GreenMethod {
    Bernoulli,
    Fourier,
}

/// Periodic Green's function `ρ` of a seasonal operator.
///
/// Satisfies `L ρ = Ш` for invertible operators and `L ρ = Ш - 1` with
/// zero mean otherwise.
#[derive(Debug, Clone)]
pub struct PeriodicGreen {
    spec: OperatorSpec,
    method: GreenMethod,
    config: FourierConfig,
    series: TruncatedSeries,
    primitive: TruncatedSeries,
}

impl PeriodicGreen {
    pub fn new(spec: &OperatorSpec, config: FourierConfig) -> Result<Self> {
        spec.expect_role(Role::Seasonal)?;
        if config.terms == 0 || !(config.tail_tol > 0.0) {
            return Err(Error::Validation(
                "fourier config needs terms >= 1 and tail_tol > 0".into(),
            ));
        }
        let method = match spec.kind.pure_derivative_order() {
            Some(n) if n <= BERNOULLI_MAX_ORDER => GreenMethod::Bernoulli,
            _ => GreenMethod::Fourier,
        };
        let c0 = if spec.is_invertible() {
            1.0 / spec.kind.response(0.0).re
        } else {
            0.0
        };
        let decay = spec.kind.decay_exponent();
        let mut coefs = Vec::with_capacity(config.terms);
        let mut prim = Vec::with_capacity(config.terms);
        for n in 1..=config.terms {
            let omega = 2.0 * PI * n as f64;
            let inv = spec.kind.response(omega).inv();
            coefs.push(inv);
            prim.push(inv / Complex64::new(0.0, omega));
        }
        Ok(Self {
            spec: spec.clone(),
            method,
            config,
            series: TruncatedSeries { c0, coefs, decay },
            primitive: TruncatedSeries {
                c0: 0.0,
                coefs: prim,
                decay: decay + 1.0,
            },
        })
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn method(&self) -> GreenMethod {
        self.method
    }

    pub fn config(&self) -> FourierConfig {
        self.config
    }

    /// Mean over one period: `1/L̂[0]` when invertible, otherwise 0.
    pub fn mean(&self) -> f64 {
        self.series.c0
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self.method {
            GreenMethod::Bernoulli => {
                let n = self.spec.order();
                Ok(-bernoulli_polynomial(n, frac(t)) / factorial(n))
            }
            GreenMethod::Fourier => self.checked(self.series.eval(t)),
        }
    }

    /// Evaluation through the truncated Fourier series regardless of method.
    pub fn fourier_eval(&self, t: f64) -> Result<SeriesValue> {
        let v = self.series.eval(t);
        self.checked(v).map(|_| v)
    }

    /// Periodic primitive of `ρ - mean`, i.e. `∫ (ρ(s) - mean) ds` with zero
    /// mean over a period.
    pub fn primitive(&self, t: f64) -> Result<f64> {
        match self.method {
            GreenMethod::Bernoulli => {
                let n = self.spec.order() + 1;
                Ok(-bernoulli_polynomial(n, frac(t)) / factorial(n))
            }
            GreenMethod::Fourier => self.checked(self.primitive.eval(t)),
        }
    }

    /// `∫_a^b ρ(s) ds` for any `a <= b`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.mean() * (b - a) + self.primitive(b)? - self.primitive(a)?)
    }

    fn checked(&self, v: SeriesValue) -> Result<f64> {
        if v.tail_bound <= self.config.tail_tol {
            Ok(v.value)
        } else {
            Err(Error::Truncation {
                bound: v.tail_bound,
                tolerance: self.config.tail_tol,
                terms: self.config.terms,
            })
        }
    }
}

/// Evaluates the periodic Green's function of a seasonal operator at `t`
/// with default truncation settings.
pub fn periodic_green_eval(spec: &OperatorSpec, t: f64) -> Result<f64> {
    PeriodicGreen::new(spec, FourierConfig::default())?.eval(t)
}
