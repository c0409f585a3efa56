/// Soft thresholding `sign(x) max(|x| - θ, 0)`.
#[inline]
pub fn soft_threshold(x: f64, theta: f64) -> f64 {
    if x > theta {
        x - theta
    } else if x < -theta {
        x + theta
    } else {
        0.0
    }
}

const BISECTION_STEPS: usize = 48;

/// `argmin_b θ‖b‖₁ + ½‖b - v‖²` subject to `Σ b = 0`.
///
/// The minimizer is `b_k = soft_θ(v_k - μ)` where `μ` zeroes the monotone
/// map `μ ↦ Σ_k soft_θ(v_k - μ)`. The root is bracketed by bisection and then
/// solved exactly on the bracketing linear piece.
pub fn prox_l1_zero_sum(v: &[f64], theta: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    prox_l1_zero_sum_into(v, theta, &mut out);
    out
}

pub(crate) fn prox_l1_zero_sum_into(v: &[f64], theta: f64, out: &mut [f64]) -> f64 {
    debug_assert!(theta >= 0.0);
    debug_assert_eq!(v.len(), out.len());
    if v.is_empty() {
        return 0.0;
    }
    let sum_at = |mu: f64| {
        v.iter()
            .map(|&x| soft_threshold(x - mu, theta))
            .sum::<f64>()
    };
    let (min, max) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if max - min <= 2.0 * theta {
        // every |v_k - μ| <= θ at the midpoint
        out.fill(0.0);
        return 0.5 * (min + max);
    }
    // Σ soft(v - μ) is >= 0 at μ = min and <= 0 at μ = max
    let mut lo = min;
    let mut hi = max;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);

    // exact root on the linear piece containing the bracket
    let (mut count, mut acc) = (0usize, 0.0);
    for &x in v {
        let d = x - mid;
        if d > theta {
            count += 1;
            acc += x - theta;
        } else if d < -theta {
            count += 1;
            acc += x + theta;
        }
    }
    let mu = if count == 0 {
        mid
    } else {
        let exact = acc / count as f64;
        let consistent = v.iter().all(|&x| {
            let before = (x - mid).abs() > theta;
            let after = (x - exact).abs() > theta;
            before == after || ((x - exact).abs() - theta).abs() <= 1e-12 * (1.0 + x.abs())
        });
        if consistent {
            exact
        } else {
            mid
        }
    };
    for (o, &x) in out.iter_mut().zip(v) {
        *o = soft_threshold(x - mu, theta);
    }
    mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn huge_threshold_gives_exact_zeros() {
        let v = [0.3, -1.2, 0.05, 2.0];
        for theta in [1.6, 1e6, 1e12, 1e300] {
            assert_eq!(prox_l1_zero_sum(&v, theta), vec![0.0; 4]);
        }
    }

    #[test]
    fn root_resolution_does_not_depend_on_threshold() {
        // the active pair keeps value ±0.1 whatever the padding of the bracket
        let v = [1.0, -1.0, 0.0];
        let b = prox_l1_zero_sum(&v, 0.9);
        assert!(
            (b[0] - 0.1).abs() < 1e-15 && (b[1] + 0.1).abs() < 1e-15 && b[2] == 0.0,
            "{b:?}"
        );
    }

    #[test]
    fn zero_threshold_projects_onto_hyperplane() {
        let v = [3.0, -1.0, 4.0, 1.5];
        let mean = v.iter().sum::<f64>() / 4.0;
        let b = prox_l1_zero_sum(&v, 0.0);
        for (bi, vi) in b.iter().zip(&v) {
            assert!((bi - (vi - mean)).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_pair() {
        let b = prox_l1_zero_sum(&[1.0, -1.0], 0.5);
        assert_eq!(b, vec![0.5, -0.5]);
    }

    #[test]
    fn large_threshold_gives_zero() {
        let b = prox_l1_zero_sum(&[0.3, -0.1, 0.2], 10.0);
        assert!(b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dense_grid_search_two_dims() {
        // feasible set is b = (s, -s)
        let v = [0.9, 0.2];
        let theta = 0.15;
        let b = prox_l1_zero_sum(&v, theta);
        let obj = |s: f64| theta * 2.0 * s.abs() + 0.5 * ((s - v[0]).powi(2) + (-s - v[1]).powi(2));
        let best = (0..=200_000)
            .map(|i| -1.0 + i as f64 * 1e-5)
            .min_by(|x, y| obj(*x).total_cmp(&obj(*y)))
            .unwrap();
        assert!((b[0] - best).abs() < 1e-5);
        assert!((b[0] + b[1]).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn subgradient_conditions(v in prop::collection::vec(-5.0f64..5.0, 1..16), theta in 0.0f64..2.0) {
            let mut b = vec![0.0; v.len()];
            let mu = prox_l1_zero_sum_into(&v, theta, &mut b);
            let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            prop_assert!(b.iter().sum::<f64>().abs() <= 1e-12 * scale * v.len() as f64);
            // v - b - μ ∈ θ ∂‖b‖₁
            for (&bi, &vi) in b.iter().zip(&v) {
                let g = vi - bi - mu;
                if bi != 0.0 {
                    prop_assert!((g - theta * bi.signum()).abs() <= 1e-9 * scale);
                } else {
                    prop_assert!(g.abs() <= theta + 1e-9 * scale);
                }
            }
        }
    }
}
