//! Monotone root bracketing shared by the utility and allocation solvers.

/// Smallest rate any solver will hand out.
pub const RATE_FLOOR: f64 = 1e-9;
/// Largest rate any solver will hand out.
pub const RATE_CAP: f64 = 1e9;

/// Narrows `[lo, hi]` around the point where a decreasing `f` crosses
/// `target`, keeping `f(lo) > target >= f(hi)`.
///
/// Positive brackets that span more than a factor of four are split at the
/// geometric mean, after that at the arithmetic mean. Iteration stops once
/// the bracket is narrower than `rel_width * hi` or the two ends are
/// adjacent floats.
pub(crate) fn bisect_decreasing<F>(mut f: F, target: f64, mut lo: f64, mut hi: f64, rel_width: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    for _ in 0..2048 {
        if hi - lo <= rel_width * hi {
            break;
        }
        let mid = if lo > 0.0 && hi > 4.0 * lo {
            lo.sqrt() * hi.sqrt()
        } else {
            lo + 0.5 * (hi - lo)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `ln(e^x - 1)` for `x > 0` without overflow.
pub(crate) fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `ln(e^a + e^b)`.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let (lo, hi) = bisect_decreasing(|x| -x * x, -2.0, 0.0, 4.0, 0.0);
        assert!((lo - 2f64.sqrt()).abs() < 1e-15);
        assert!((hi - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bisect_near_underflow() {
        let target = 1e-190;
        let (lo, hi) = bisect_decreasing(|x| -x.ln(), -f64::ln(target), 1e-300, 1e-150, 0.0);
        assert!((hi - target).abs() <= 1e-12 * target, "{lo} {hi}");
    }

    #[test]
    fn bisect_spans_many_decades() {
        let (lo, hi) = bisect_decreasing(|x| 1.0 / x, 1.0 / 3.0e7, RATE_FLOOR, RATE_CAP, 1e-14);
        assert!((lo / 3.0e7 - 1.0).abs() < 1e-13, "{lo} {hi}");
    }

    #[test]
    fn stable_helpers() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(-800.0) >= 0.0);
        assert!((ln_expm1(1000.0) - 1000.0).abs() < 1e-12);
        assert!((ln_expm1(1.0) - (1f64.exp() - 1.0).ln()).abs() < 1e-15);
        assert!((log_add_exp(-5000.0, -5000.0) - (-5000.0 + 2f64.ln())).abs() < 1e-9);
    }
}
