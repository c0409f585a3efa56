#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seasonal_spline::dictionary::{
    assemble, build_dictionary, evaluate_solution, DesignMatrix, Dictionary, GridSpec,
};
use seasonal_spline::operators::{OperatorKind, OperatorSpec};
use seasonal_spline::sensing::SensingFunctional;
use seasonal_spline::tv::CompositeSolution;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derivative_pair(n_t: u32, n_s: u32) -> (OperatorSpec, OperatorSpec) {
    (
        OperatorSpec::trend(OperatorKind::derivative(n_t)).unwrap(),
        OperatorSpec::seasonal(OperatorKind::derivative(n_s)).unwrap(),
    )
}

pub struct Instance {
    pub dict: Dictionary,
    pub design: DesignMatrix,
    pub plan: Vec<SensingFunctional>,
    pub y: Vec<f64>,
}

/// Random samplings on `[0, 1)` of a random sparse truth in the same
/// dictionary, plus Gaussian-ish noise of size `noise`.
pub fn random_instance(
    seed: u64,
    l: usize,
    grid: &GridSpec,
    ops: (OperatorSpec, OperatorSpec),
    noise: f64,
) -> Instance {
    let mut r = rng(seed);
    let dict = build_dictionary(&ops.0, &ops.1, grid).unwrap();
    let mut xs: Vec<f64> = (0..l)
        .map(|_| r.random_range(grid.window.0..grid.window.1))
        .collect();
    xs.sort_by(f64::total_cmp);
    let plan: Vec<SensingFunctional> = xs
        .iter()
        .map(|&x| SensingFunctional::sampling(x).unwrap())
        .collect();
    let design = assemble(&dict, &plan).unwrap();

    let layout = dict.layout();
    let mut truth = CompositeSolution::zeros(layout);
    for _ in 0..2 {
        let i = r.random_range(0..truth.a.len());
        truth.a[i] = r.random_range(-3.0..3.0);
    }
    for c in truth.c.iter_mut() {
        *c = r.random_range(-1.0..1.0);
    }
    if truth.b.len() >= 2 {
        let i = r.random_range(0..truth.b.len());
        let j = (i + 1 + r.random_range(0..truth.b.len() - 1)) % truth.b.len();
        let w = r.random_range(0.5..2.0);
        truth.b[i] = w;
        truth.b[j] = if layout.zero_sum {
            -w
        } else {
            r.random_range(-2.0..2.0)
        };
    }
    if let Some(a) = truth.alpha.as_mut() {
        *a = r.random_range(-1.0..1.0);
    }
    let y = xs
        .iter()
        .map(|&x| {
            let (ft, fs) = evaluate_solution(&dict, &truth, x).unwrap();
            ft + fs + noise * (r.random::<f64>() - 0.5) * 2.0
        })
        .collect();
    Instance {
        dict,
        design,
        plan,
        y,
    }
}

/// Log-barrier interior-point reference for
/// `min ‖y - A x‖² + λ_T ‖a‖₁ + λ_S ‖b‖₁  s.t. Σ b = 0 (when active)`.
///
/// Penalized coefficients are split into nonnegative parts; the barrier
/// subproblems are solved by equality-constrained Newton steps.
pub fn interior_point_objective(
    design: &DesignMatrix,
    y: &[f64],
    lambda_t: f64,
    lambda_s: f64,
) -> f64 {
    let lay = &design.layout;
    let a = &design.matrix;
    let trend: Vec<usize> = lay.trend.clone().collect();
    let seasonal: Vec<usize> = lay.seasonal.clone().collect();
    let free: Vec<usize> = lay.unregularized();

    // variable order: [a+, a-, b+, b-, free]
    let np = 2 * (trend.len() + seasonal.len());
    let n = np + free.len();
    let mut m = DMatrix::zeros(a.nrows(), n);
    let mut w = DVector::zeros(n);
    let mut col = 0;
    for (cols, lambda) in [(&trend, lambda_t), (&seasonal, lambda_s)] {
        for sign in [1.0, -1.0] {
            for &j in cols.iter() {
                m.set_column(col, &(a.column(j) * sign));
                w[col] = lambda;
                col += 1;
            }
        }
    }
    for &j in &free {
        m.set_column(col, &a.column(j));
        col += 1;
    }
    let mut e = DVector::zeros(n);
    let constrained = lay.zero_sum && !seasonal.is_empty();
    if constrained {
        let off = 2 * trend.len();
        for k in 0..seasonal.len() {
            e[off + k] = 1.0;
            e[off + seasonal.len() + k] = -1.0;
        }
    }
    // columns span {d : eᵀ d = 0}, pivoting on the first seasonal entry
    let identity = DMatrix::<f64>::identity(n, n);
    let basis = if constrained {
        let pivot = 2 * trend.len();
        let mut b = DMatrix::zeros(n, n - 1);
        let mut col = 0;
        for i in (0..n).filter(|&i| i != pivot) {
            b[(i, col)] = 1.0;
            b[(pivot, col)] = -e[i] / e[pivot];
            col += 1;
        }
        b
    } else {
        identity.clone()
    };
    let yv = DVector::from_column_slice(y);
    let mtm = m.tr_mul(&m);
    let mty = m.tr_mul(&yv);
    let f = |z: &DVector<f64>| (&yv - &m * z).norm_squared() + w.dot(z);

    let mut z = DVector::zeros(n);
    for i in 0..np {
        z[i] = 1.0;
    }
    let mut t = 1.0;
    let scale = yv.norm_squared().max(1e-300);
    loop {
        for _ in 0..200 {
            // gradient and Hessian of t f(z) - Σ log z_i
            let mut g = (&mtm * &z - &mty) * (2.0 * t) + &w * t;
            let mut h = &mtm * (2.0 * t);
            for i in 0..np {
                g[i] -= 1.0 / z[i];
                h[(i, i)] += 1.0 / (z[i] * z[i]);
            }
            // Newton step restricted to {eᵀ dz = 0} through a null-space basis
            let z_basis = if constrained { &basis } else { &identity };
            let hr = z_basis.tr_mul(&(&h * z_basis));
            let gr = z_basis.tr_mul(&g);
            let w_step = match hr.clone().cholesky() {
                Some(ch) => ch.solve(&(-&gr)),
                None => {
                    let svd = hr.svd(true, true);
                    let eps = 1e-15 * svd.singular_values.max();
                    svd.solve(&(-&gr), eps).expect("singular vectors computed")
                }
            };
            let dz = z_basis * w_step;
            let decrement = -g.dot(&dz);
            if decrement / 2.0 <= 1e-13 {
                break;
            }
            let mut s = 1.0;
            for i in 0..np {
                if dz[i] < 0.0 {
                    s = f64::min(s, -0.99 * z[i] / dz[i]);
                }
            }
            let phi = |z: &DVector<f64>| t * f(z) - (0..np).map(|i| z[i].ln()).sum::<f64>();
            let p0 = phi(&z);
            while phi(&(&z + &dz * s)) > p0 - 0.25 * s * decrement && s > 1e-16 {
                s *= 0.5;
            }
            z += &dz * s;
        }
        if (np as f64) / t < 1e-11 * scale {
            break;
        }
        t *= 10.0;
    }
    f(&z)
}

/// Independent objective evaluation from the stored blocks.
pub fn objective(
    design: &DesignMatrix,
    y: &[f64],
    sol: &CompositeSolution,
    lambda_t: f64,
    lambda_s: f64,
) -> f64 {
    let x = sol.to_vector();
    let r = DVector::from_column_slice(y) - &design.matrix * x;
    r.norm_squared()
        + lambda_t * sol.a.iter().map(|v| v.abs()).sum::<f64>()
        + lambda_s * sol.b.iter().map(|v| v.abs()).sum::<f64>()
}

const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Composite five-point Gauss-Legendre on `panels` equal cells of every
/// piece between consecutive breakpoints; exact for polynomials of degree 9
/// on each piece.
pub fn gauss_legendre(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    panels: usize,
) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let mid = w[0] + (p as f64 + 0.5) * h;
            for (x, wt) in GL5 {
                acc += wt * 0.5 * h * f(mid + 0.5 * h * x);
            }
        }
    }
    acc
}

/// `d^n/dt^n exp(-(t - m)^2 / (2 s^2))` through probabilists' Hermite polynomials.
pub fn gaussian_derivative(n: u32, m: f64, s: f64, t: f64) -> f64 {
    let u = (t - m) / s;
    let (mut h0, mut h1) = (1.0, u);
    let he = match n {
        0 => h0,
        _ => {
            for k in 1..n {
                let h2 = u * h1 - k as f64 * h0;
                h0 = h1;
                h1 = h2;
            }
            h1
        }
    };
    (-1.0f64 / s).powi(n as i32) * he * (-0.5 * u * u).exp()
}
