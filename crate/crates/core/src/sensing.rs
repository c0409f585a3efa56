//! Linear measurement functionals and their periodizations.
//!
//! A functional `φ` measures a composite signal as
//! `φ(f_T + f_S) = ⟨f_T, φ⟩ + ⟨f_S, Per{φ}⟩`, where `Per{φ} = Σ_k φ(· - k)`
//! acts on the 1-periodic seasonal part.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    fractional_part, trend_derivative_order, truncated_power, truncated_power_integral,
    OperatorSpec, PeriodicGreen,
};
use crate::quadrature::piecewise_simpson;

/// Default tolerance for periodization tails and density quadrature.
pub const DEFAULT_SENSING_TOL: f64 = 1e-10;

/// Declared envelope `|φ(t)| <= c / (1 + |t|^p)` of a tabulated density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decay {
    pub c: f64,
    pub p: f64,
}

/// A density tabulated on a uniform grid `start + i * step`, interpreted as
/// its piecewise-linear interpolant and zero outside the table. `1/step` must
/// be an integer so the grid is invariant under integer shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedDensity {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub decay: Decay,
}

impl WeightedDensity {
    /// Tabulates `f` on `[start, start + (n-1)/per_unit]`.
    pub fn tabulate(
        f: impl Fn(f64) -> f64,
        start: f64,
        per_unit: usize,
        n: usize,
        decay: Decay,
    ) -> Self {
        let step = 1.0 / per_unit as f64;
        let values = (0..n).map(|i| f(start + i as f64 * step)).collect();
        Self {
            start,
            step,
            values,
            decay,
        }
    }

    fn per_unit(&self) -> Result<usize> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Validation(format!(
                "density step must be positive, got {}",
                self.step
            )));
        }
        let m = (1.0 / self.step).round();
        if m < 1.0 || (1.0 / self.step - m).abs() > 1e-9 * m {
            return Err(Error::Validation(format!(
                "density step {} is not the reciprocal of an integer",
                self.step
            )));
        }
        Ok(m as usize)
    }

    fn end(&self) -> f64 {
        self.start + (self.values.len() - 1) as f64 * self.step
    }

    fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    /// Piecewise-linear value.
    pub fn eval(&self, t: f64) -> f64 {
        if self.values.len() < 2 || t < self.start || t > self.end() {
            return 0.0;
        }
        let u = (t - self.start) / self.step;
        let i = (u.floor() as usize).min(self.values.len() - 2);
        let w = u - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// `∫ φ`, exact for the interpolant.
    pub fn mass(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * self.step)
            .sum()
    }

    /// Bound on `sup_t Σ_k |φ(t + k)|` over the shifts that leave the table.
    fn periodization_tail(&self) -> f64 {
        let Decay { c, p } = self.decay;
        let side = |r: f64| {
            let r = r.max(0.0);
            // f(r) + ∫_r^∞ f for the decreasing envelope f(t) = c/(1+t^p)
            let integral = if r > 0.0 {
                c * r.powf(1.0 - p) / (p - 1.0)
            } else {
                c * (1.0 + 1.0 / (p - 1.0))
            };
            c / (1.0 + r.powf(p)) + integral
        };
        side(self.end()) + side(-self.start)
    }
}

/// Kind and parameters of a measurement functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SensingKind {
    /// Point evaluation `f(x)`.
    Sampling { x: f64 },
    /// Integral over `[start, start + len)`.
    Box { start: f64, len: f64 },
    /// Pairing with a tabulated density.
    Density(WeightedDensity),
}

/// Periodized representation `Per{φ}` on the circle.
#[derive(Debug, Clone, PartialEq)]
pub enum Periodized {
    /// Dirac comb shifted to `offset ∈ [0, 1)`.
    Comb { offset: f64 },
    /// `count + 1_{[arc_start, arc_start + arc_len) mod 1}`; constant when `arc_len == 0`.
    Box {
        count: f64,
        arc_start: f64,
        arc_len: f64,
    },
    /// Piecewise-linear periodic function on `m` cells starting at `origin`;
    /// cell `c` runs from `left[c]` to `right[c]`.
    Tabulated {
        origin: f64,
        step: f64,
        left: Vec<f64>,
        right: Vec<f64>,
    },
}

impl Periodized {
    /// Value of a function-valued periodization; `None` for the comb.
    pub fn value(&self, t: f64) -> Option<f64> {
        match self {
            Periodized::Comb { .. } => None,
            Periodized::Box {
                count,
                arc_start,
                arc_len,
            } => {
                let inside = fractional_part(t - arc_start) < *arc_len;
                Some(count + if inside { 1.0 } else { 0.0 })
            }
            Periodized::Tabulated {
                origin,
                step,
                left,
                right,
            } => {
                let m = left.len();
                let u = fractional_part(t - origin) / step;
                let c = (u.floor() as usize).min(m - 1);
                let w = u - c as f64;
                Some(left[c] * (1.0 - w) + right[c] * w)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Periodized::Box { arc_len, .. } if *arc_len == 0.0)
    }
}

/// Computes `Per{φ}`.
///
/// For densities the shift sum is truncated to the tabulated range; the
/// declared envelope must certify that the neglected shifts contribute at
/// most `eps` at every point.
pub fn periodize(kind: &SensingKind, eps: f64) -> Result<Periodized> {
    match kind {
        SensingKind::Sampling { x } => {
            if !x.is_finite() {
                return Err(Error::Validation(format!(
                    "sampling location must be finite, got {x}"
                )));
            }
            Ok(Periodized::Comb {
                offset: fractional_part(*x),
            })
        }
        SensingKind::Box { start, len } => {
            if !start.is_finite() || !(*len > 0.0) || !len.is_finite() {
                return Err(Error::Validation(format!(
                    "box needs finite start and positive length, got start={start}, len={len}"
                )));
            }
            let count = len.floor();
            Ok(Periodized::Box {
                count,
                arc_start: fractional_part(*start),
                arc_len: len - count,
            })
        }
        SensingKind::Density(d) => {
            if !(d.decay.p > 1.0) {
                return Err(Error::NotPeriodizable(d.decay.p));
            }
            if !(d.decay.c >= 0.0) || !d.decay.c.is_finite() {
                return Err(Error::Validation(format!(
                    "decay constant must be finite and >= 0, got {}",
                    d.decay.c
                )));
            }
            if d.values.len() < 2 || d.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(
                    "density needs at least two finite samples".into(),
                ));
            }
            if !d.start.is_finite() {
                return Err(Error::Validation("density start must be finite".into()));
            }
            let m = d.per_unit()?;
            let tail = d.periodization_tail();
            if tail > eps {
                return Err(Error::Truncation {
                    bound: tail,
                    tolerance: eps,
                    terms: d.values.len(),
                });
            }
            let mut left = vec![0.0; m];
            let mut right = vec![0.0; m];
            for i in 0..d.values.len() - 1 {
                left[i % m] += d.values[i];
                right[i % m] += d.values[i + 1];
            }
            Ok(Periodized::Tabulated {
                origin: fractional_part(d.start),
                step: d.step,
                left,
                right,
            })
        }
    }
}

/// Atom of the trend part: a shifted Green's function or a monomial `t^power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrendAtom {
    Green { knot: f64 },
    Monomial { power: u32 },
}

/// Atom of the seasonal part: a shifted periodic Green's function or the unit constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeasonalAtom {
    Green { knot: f64 },
    Constant,
}

/// A measurement functional with its cached periodization.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingFunctional {
    kind: SensingKind,
    periodized: Periodized,
    tol: f64,
}

impl SensingFunctional {
    pub fn new(kind: SensingKind) -> Result<Self> {
        Self::with_tolerance(kind, DEFAULT_SENSING_TOL)
    }

    pub fn with_tolerance(kind: SensingKind, tol: f64) -> Result<Self> {
        let periodized = periodize(&kind, tol)?;
        Ok(Self {
            kind,
            periodized,
            tol,
        })
    }

    pub fn sampling(x: f64) -> Result<Self> {
        Self::new(SensingKind::Sampling { x })
    }

    pub fn box_average(start: f64, len: f64) -> Result<Self> {
        Self::new(SensingKind::Box { start, len })
    }

    pub fn kind(&self) -> &SensingKind {
        &self.kind
    }

    pub fn periodized(&self) -> &Periodized {
        &self.periodized
    }

    pub fn is_sampling(&self) -> bool {
        matches!(self.kind, SensingKind::Sampling { .. })
    }

    /// Short human-readable description used in error messages.
    pub fn describe(&self) -> String {
        match &self.kind {
            SensingKind::Sampling { x } => format!("sampling at x={x}"),
            SensingKind::Box { start, len } => format!("box [{start}, {})", start + len),
            SensingKind::Density(d) => format!("density on [{}, {}]", d.start, d.end()),
        }
    }
}

/// `⟨atom, φ⟩` for a trend atom of the operator `trend`.
pub fn apply_to_trend_atom(
    phi: &SensingFunctional,
    trend: &OperatorSpec,
    atom: TrendAtom,
) -> Result<f64> {
    let order = match atom {
        TrendAtom::Green { .. } => trend_derivative_order(trend)?,
        TrendAtom::Monomial { .. } => 0,
    };
    let value = |t: f64| match atom {
        TrendAtom::Green { knot } => truncated_power(t - knot, order),
        TrendAtom::Monomial { power } => t.powi(power as i32),
    };
    match &phi.kind {
        SensingKind::Sampling { x } => Ok(value(*x)),
        SensingKind::Box { start, len } => {
            let end = start + len;
            Ok(match atom {
                TrendAtom::Green { knot } => {
                    truncated_power_integral(end - knot, order)
                        - truncated_power_integral(start - knot, order)
                }
                TrendAtom::Monomial { power } => {
                    let k = power as i32 + 1;
                    (end.powi(k) - start.powi(k)) / k as f64
                }
            })
        }
        SensingKind::Density(d) => {
            let (lo, breaks) = match atom {
                // causal atom vanishes left of its knot
                TrendAtom::Green { knot } => (knot.max(d.start), vec![knot]),
                TrendAtom::Monomial { .. } => (d.start, vec![]),
            };
            density_pairing(d, lo, d.end(), &breaks, phi.tol, |t| d.eval(t) * value(t))
        }
    }
}

/// `⟨atom, Per{φ}⟩` for a seasonal atom built from `green`.
pub fn apply_to_seasonal_atom(
    phi: &SensingFunctional,
    green: &PeriodicGreen,
    atom: SeasonalAtom,
) -> Result<f64> {
    match (&phi.periodized, atom) {
        (Periodized::Comb { offset }, SeasonalAtom::Green { knot }) => green.eval(offset - knot),
        (Periodized::Comb { .. }, SeasonalAtom::Constant) => Ok(1.0),
        (
            Periodized::Box {
                count,
                arc_start,
                arc_len,
            },
            SeasonalAtom::Green { knot },
        ) => {
            let arc = if *arc_len > 0.0 {
                green.integral(arc_start - knot, arc_start + arc_len - knot)?
            } else {
                0.0
            };
            Ok(count * green.mean() + arc)
        }
        (Periodized::Box { count, arc_len, .. }, SeasonalAtom::Constant) => Ok(count + arc_len),
        (
            Periodized::Tabulated {
                origin,
                step,
                left,
                right,
            },
            atom,
        ) => {
            let m = left.len();
            match atom {
                SeasonalAtom::Constant => Ok(left
                    .iter()
                    .zip(right)
                    .map(|(l, r)| 0.5 * (l + r) * step)
                    .sum()),
                SeasonalAtom::Green { knot } => {
                    let per = &phi.periodized;
                    // integrate over one period starting at the grid origin
                    let lo = *origin;
                    let hi = origin + 1.0;
                    let first = knot + (lo - knot).ceil();
                    let breaks: Vec<f64> = (0..=m)
                        .map(|c| lo + c as f64 * step)
                        .chain([first])
                        .collect();
                    // evaluation errors are surfaced after the quadrature
                    let failure = std::cell::RefCell::new(None::<Error>);
                    let integrand = |t: f64| {
                        let gv = green.eval(t - knot).unwrap_or_else(|e| {
                            failure.borrow_mut().get_or_insert(e);
                            0.0
                        });
                        per.value(t).unwrap_or(0.0) * gv
                    };
                    let v = piecewise_simpson(&integrand, lo, hi, &breaks, phi.tol)?;
                    match failure.into_inner() {
                        Some(e) => Err(e),
                        None => Ok(v),
                    }
                }
            }
        }
    }
}

fn density_pairing(
    d: &WeightedDensity,
    lo: f64,
    hi: f64,
    extra_breaks: &[f64],
    tol: f64,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    if lo >= hi {
        return Ok(0.0);
    }
    let first = ((lo - d.start) / d.step).floor().max(0.0) as usize;
    let breaks: Vec<f64> = (first..d.values.len())
        .map(|i| d.node(i))
        .take_while(|&t| t <= hi)
        .chain(extra_breaks.iter().copied())
        .collect();
    piecewise_simpson(&f, lo, hi, &breaks, tol)
}

/// Parses a JSON sensing plan `[{"kind": "sampling", "x": ...}, ...]`.
pub fn parse_plan(json: &str) -> Result<Vec<SensingFunctional>> {
    let kinds: Vec<SensingKind> =
        serde_json::from_str(json).map_err(|e| Error::Validation(format!("sensing plan: {e}")))?;
    kinds.into_iter().map(SensingFunctional::new).collect()
}

pub fn plan_to_json(plan: &[SensingFunctional]) -> String {
    let kinds: Vec<&SensingKind> = plan.iter().map(|p| &p.kind).collect();
    serde_json::to_string(&kinds).expect("sensing kinds serialize")
}
