//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Orthonormal basis of the column space of `m` and its numerical rank.
pub fn orthonormal_range(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    if m.ncols() == 0 || m.nrows() == 0 {
        return (DMatrix::zeros(m.nrows(), 0), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let cutoff = RANK_RTOL * smax.max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cutoff && smax > 0.0)
        .collect();
    let q = DMatrix::from_fn(m.nrows(), keep.len(), |i, j| u[(i, keep[j])]);
    (q, keep.len())
}

/// Numerical rank of `m`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    orthonormal_range(m).1
}

/// Minimum-norm least-squares solution of `m x ≈ rhs`, with the numerical rank.
pub fn lstsq(m: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, usize) {
    if m.ncols() == 0 {
        return (DVector::zeros(0), 0);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = RANK_RTOL * smax.max(f64::MIN_POSITIVE);
    let r = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd
        .solve(rhs, eps)
        .expect("both singular vector sets computed");
    (x, r)
}

/// Projects `v` onto the orthogonal complement of the columns of orthonormal `q`.
pub fn project_out(q: &DMatrix<f64>, v: &mut DVector<f64>) {
    if q.ncols() == 0 {
        return;
    }
    let coef = q.tr_mul(v);
    v.gemv(-1.0, q, &coef, 1.0);
}

/// Estimate of `‖m‖₂²` by power iteration on the smaller Gram matrix.
///
/// Runs until the relative change drops below `tol` or `max_iters` is hit.
pub fn spectral_norm_sq(m: &DMatrix<f64>, max_iters: usize, tol: f64) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.tr_mul(m)
    };
    let n = gram.nrows();
    // deterministic, generically non-orthogonal start
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..max_iters {
        let w = &gram * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / nw;
        if (next - est).abs() <= tol * next.abs() {
            return next.max(nw);
        }
        est = next;
    }
    est
}
