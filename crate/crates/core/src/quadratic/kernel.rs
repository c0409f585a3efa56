//! Reproducing kernels of Sobolev operators on the line and the circle.
//!
//! For `L = (Id - Δ)^{γ/2}` the kernel of `L*L` on the line has Fourier
//! transform `(1 + ω²)^{-γ}`. On the circle the Fourier coefficients are the
//! same function sampled at `2πn`, so by Poisson summation the periodic kernel
//! is the 1-periodization of the line kernel.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{factorial, OperatorKind, OperatorSpec};

/// Tabulation settings for numerically constructed kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Target absolute error of tabulated kernel values.
    pub tol: f64,
    /// Spacing of the interpolation table.
    pub table_step: f64,
    /// Largest FFT size, as a power of two.
    pub max_fft_log2: u32,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            table_step: 1e-3,
            max_fft_log2: 22,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    /// `½ e^{-|x|}` and its primitives in closed form (`γ = 1`).
    Exponential,
    /// Closed-form values for integer `γ`, tabulated primitives.
    ClosedFormTable,
    /// Inverse FFT of `(1 + ω²)^{-γ}`, tabulated.
    FourierTable,
}

/// Even kernel `k` on the line with its primitives
/// `K1(x) = ∫_0^x k` (odd) and `K2(x) = ∫_0^x K1` (even).
#[derive(Debug, Clone)]
pub struct LineKernel {
    gamma: f64,
    method: KernelMethod,
    table: Option<Table>,
    /// Beyond this distance the kernel is treated as zero.
    reach: f64,
}

#[derive(Debug, Clone)]
struct Table {
    dx: f64,
    k: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    /// Error estimate of the tabulated values.
    error: f64,
}

impl LineKernel {
    pub fn sobolev(gamma: f64, cfg: &KernelConfig) -> Result<Self> {
        if !(gamma > 0.5) || !gamma.is_finite() {
            return Err(Error::Unsupported(format!(
                "quadratic kernels need a Sobolev exponent above 1/2 (bounded kernel), got {gamma}"
            )));
        }
        let reach = 40.0 + 4.0 * gamma;
        if gamma == 1.0 {
            return Ok(Self {
                gamma,
                method: KernelMethod::Exponential,
                table: None,
                reach,
            });
        }
        let (method, dx, values, error) = if gamma.fract() == 0.0 && gamma <= 30.0 {
            let p = gamma as u32 - 1;
            let n = (reach / cfg.table_step).ceil() as usize;
            let dx = reach / n as f64;
            let values = (0..=n)
                .map(|j| matern_half_integer(p, j as f64 * dx))
                .collect();
            (KernelMethod::ClosedFormTable, dx, values, 0.0)
        } else {
            let (dx, values, error) = fourier_table(gamma, reach, cfg)?;
            (KernelMethod::FourierTable, dx, values, error)
        };
        let k1 = cumulative(&values, dx, 0.0);
        let k2 = cumulative(&k1, dx, 0.0);
        Ok(Self {
            gamma,
            method,
            table: Some(Table {
                dx,
                k: values,
                k1,
                k2,
                error,
            }),
            reach,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn method(&self) -> KernelMethod {
        self.method
    }

    /// Error estimate of tabulated values (0 for closed forms).
    pub fn table_error(&self) -> f64 {
        self.table.as_ref().map_or(0.0, |t| t.error)
    }

    /// Distance beyond which `k` is negligible.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn k(&self, x: f64) -> f64 {
        let r = x.abs();
        match &self.table {
            None => 0.5 * (-r).exp(),
            Some(t) => {
                if r >= self.reach {
                    0.0
                } else {
                    interpolate(&t.k, t.dx, r)
                }
            }
        }
    }

    pub fn k1(&self, x: f64) -> f64 {
        let r = x.abs();
        let v = match &self.table {
            None => 0.5 * (1.0 - (-r).exp()),
            Some(t) => {
                if r >= self.reach {
                    *t.k1.last().expect("table is non-empty")
                } else {
                    interpolate(&t.k1, t.dx, r)
                }
            }
        };
        v.copysign(x)
    }

    pub fn k2(&self, x: f64) -> f64 {
        let r = x.abs();
        match &self.table {
            None => 0.5 * (r - 1.0 + (-r).exp()),
            Some(t) => {
                if r >= self.reach {
                    // linear continuation from the last tabulated node, which may lie past the reach
                    let last = (t.k2.len() - 1) as f64 * t.dx;
                    let end = *t.k1.last().expect("table is non-empty");
                    t.k2.last().expect("table is non-empty") + end * (r - last)
                } else {
                    interpolate(&t.k2, t.dx, r)
                }
            }
        }
    }
}

/// Inverse Fourier transform of `(1 + ω²)^{-(p+1)}`: a Matérn kernel with
/// half-integer smoothness, `e^{-x}` times a polynomial.
fn matern_half_integer(p: u32, x: f64) -> f64 {
    let x = x.abs();
    let pf = factorial(p);
    // (x/2)^p e^{-x} / (2 p!) Σ_j (p+j)! / (j! (p-j)!) (2x)^{-j}, written without negative powers
    let mut s = 0.0;
    for j in 0..=p {
        let c = factorial(p + j) / (factorial(j) * factorial(p - j));
        s += c * (x / 2.0).powi((p - j) as i32) * 0.25f64.powi(j as i32);
    }
    s * (-x).exp() / (2.0 * pf)
}

/// Samples the kernel on `[0, reach]` by an FFT of `(1 + ω²)^{-γ}` on a grid
/// whose spatial period leaves aliasing negligible; the frequency cut-off is
/// chosen so the truncated tail `Ω^{1-2γ} / (π (2γ - 1))` meets the tolerance.
fn fourier_table(gamma: f64, reach: f64, cfg: &KernelConfig) -> Result<(f64, Vec<f64>, f64)> {
    let period = 2.0 * reach + 80.0;
    let d_omega = 2.0 * std::f64::consts::PI / period;
    let tail = |n: usize| {
        let omega = 0.5 * n as f64 * d_omega;
        omega.powf(1.0 - 2.0 * gamma) / (std::f64::consts::PI * (2.0 * gamma - 1.0))
    };
    let mut log2 = 12;
    while tail(1 << log2) > cfg.tol {
        log2 += 1;
        if log2 > cfg.max_fft_log2 {
            return Err(Error::Truncation {
                bound: tail(1 << cfg.max_fft_log2),
                tolerance: cfg.tol,
                terms: 1 << cfg.max_fft_log2,
            });
        }
    }
    let n = 1usize << log2;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let idx = if k < n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            let w = idx * d_omega;
            Complex64::new((1.0 + w * w).powf(-gamma), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let dx_fft = period / n as f64;
    let stride = ((cfg.table_step / dx_fft).floor() as usize).max(1);
    let dx = dx_fft * stride as f64;
    let count = (reach / dx).ceil() as usize + 1;
    let scale = d_omega / (2.0 * std::f64::consts::PI);
    let values = (0..=count).map(|j| buf[j * stride].re * scale).collect();
    Ok((dx, values, tail(n)))
}

/// `F_j = F_0 + ∫_0^{x_j} f` for samples `f_j = f(j dx)`, integrating the
/// local cubic interpolant on each cell.
fn cumulative(f: &[f64], dx: f64, f0: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = Vec::with_capacity(n);
    out.push(f0);
    let mut acc = f0;
    for j in 0..n - 1 {
        let cell = if j == 0 {
            dx / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if j + 2 >= n {
            dx / 24.0 * (9.0 * f[j + 1] + 19.0 * f[j] - 5.0 * f[j - 1] + f[j - 2])
        } else {
            dx / 24.0 * (-f[j - 1] + 13.0 * f[j] + 13.0 * f[j + 1] - f[j + 2])
        };
        acc += cell;
        out.push(acc);
    }
    out
}

/// Four-point Lagrange interpolation of uniform samples at `r >= 0`; stencils
/// never reach across the origin, where the kernel may have a kink.
fn interpolate(v: &[f64], dx: f64, r: f64) -> f64 {
    let u = r / dx;
    let n = v.len();
    let i = (u.floor() as usize).min(n - 2);
    let s = i.saturating_sub(1).min(n - 4);
    let t = u - s as f64;
    let (f0, f1, f2, f3) = (v[s], v[s + 1], v[s + 2], v[s + 3]);
    let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    f0 * l0 + f1 * l1 + f2 * l2 + f3 * l3
}

/// Sobolev exponent of a purely Sobolev operator (compositions add up).
pub(crate) fn sobolev_exponent(spec: &OperatorSpec) -> Result<f64> {
    fn total(kind: &OperatorKind) -> Option<f64> {
        match kind {
            OperatorKind::Derivative { .. } => None,
            OperatorKind::Sobolev { gamma } => Some(*gamma),
            OperatorKind::Composition { factors } => factors.iter().map(total).sum(),
        }
    }
    total(&spec.kind).ok_or_else(|| {
        Error::Unsupported(format!(
            "quadratic reconstruction needs invertible (Sobolev) operators; the {:?} operator has a derivative factor",
            spec.role
        ))
    })
}

/// Trend and periodic kernels of an operator pair.
#[derive(Debug, Clone)]
pub struct KernelPair {
    pub trend: LineKernel,
    /// Line kernel whose 1-periodization is the seasonal kernel.
    pub seasonal: LineKernel,
}

impl KernelPair {
    pub fn new(trend: &OperatorSpec, seasonal: &OperatorSpec, cfg: &KernelConfig) -> Result<Self> {
        let gt = sobolev_exponent(trend)?;
        let gs = sobolev_exponent(seasonal)?;
        Ok(Self {
            trend: LineKernel::sobolev(gt, cfg)?,
            seasonal: LineKernel::sobolev(gs, cfg)?,
        })
    }

    /// `k_T(x, y)`.
    pub fn trend_kernel(&self, x: f64, y: f64) -> f64 {
        self.trend.k(x - y)
    }

    /// `k_S(x, y) = Σ_n k(x - y + n)`.
    pub fn seasonal_kernel(&self, x: f64, y: f64) -> f64 {
        let d = crate::operators::fractional_part(x - y);
        self.shifts().map(|n| self.seasonal.k(d + n as f64)).sum()
    }

    /// Integer shifts that carry non-negligible seasonal mass for offsets in `[-1, 2]`.
    pub(crate) fn shifts(&self) -> std::ops::RangeInclusive<i64> {
        let m = self.seasonal.reach().ceil() as i64 + 2;
        -m..=m
    }
}
