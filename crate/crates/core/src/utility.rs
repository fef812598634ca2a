//! Application utility functions.
//!
//! A utility maps an allocated rate to a satisfaction level in `[0, 1]`.
//! Real-time traffic is modelled with a normalized sigmoid
//!
//! ```text
//! U(r) = c * (1 / (1 + exp(-a (r - b))) - d),  c = (1 + e^{ab}) / e^{ab},  d = 1 / (1 + e^{ab})
//! ```
//!
//! and delay-tolerant traffic with a normalized logarithm
//!
//! ```text
//! U(r) = ln(1 + k r) / ln(1 + k r_max)
//! ```
//!
//! Allocation only ever needs `ln U` and its derivative, the *slope*
//! `S(r) = d ln U / dr`. Both are positive and strictly decreasing, so `S` is
//! invertible and `S^{-1}(p)` is the rate an application demands at price `p`.
//!
//! All evaluations use rearranged forms that stay finite for large `a*b`:
//! the sigmoid simplifies to `U(r) = (1 - e^{-ar}) / (1 + e^{-a(r-b)})` and its
//! slope to `a / (e^{ar} - 1) + a / (1 + e^{a(r-b)})`.

use crate::error::{domain, Result};
use crate::numeric::{bisect_decreasing, ln_expm1, log_add_exp, softplus, RATE_CAP, RATE_FLOOR};

/// Normalized sigmoid utility for real-time applications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidalUtility {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl SigmoidalUtility {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(domain(format!("sigmoid steepness a must be positive, got {a}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(domain(format!("sigmoid inflection b must be positive, got {b}")));
        }
        // e^{-ab} never overflows; these equal the textbook forms exactly and
        // tend to d = e^{-ab}, c = 1 for large ab.
        let tail = (-a * b).exp();
        Ok(Self {
            a,
            b,
            c: 1.0 + tail,
            d: tail / (1.0 + tail),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Normalization factor making `U(inf) = 1`.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Offset making `U(0) = 0`.
    pub fn d(&self) -> f64 {
        self.d
    }

    fn eval(&self, r: f64) -> f64 {
        -(-self.a * r).exp_m1() / (1.0 + (-self.a * (r - self.b)).exp())
    }

    fn log_eval(&self, r: f64) -> f64 {
        (-(-self.a * r).exp_m1()).ln() - softplus(-self.a * (r - self.b))
    }

    fn slope(&self, r: f64) -> f64 {
        self.a / (self.a * r).exp_m1() + self.a / (1.0 + (self.a * (r - self.b)).exp())
    }

    fn log_slope(&self, r: f64) -> f64 {
        self.a.ln() + log_add_exp(-ln_expm1(self.a * r), -softplus(self.a * (r - self.b)))
    }
}

/// Normalized logarithmic utility for delay-tolerant applications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogarithmicUtility {
    k: f64,
    r_max: f64,
    log_norm: f64,
}

impl LogarithmicUtility {
    pub fn new(k: f64, r_max: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(domain(format!("logarithmic sensitivity k must be positive, got {k}")));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(domain(format!("logarithmic r_max must be positive, got {r_max}")));
        }
        Ok(Self {
            k,
            r_max,
            log_norm: (k * r_max).ln_1p(),
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    fn eval(&self, r: f64) -> f64 {
        (self.k * r).ln_1p() / self.log_norm
    }

    fn log_eval(&self, r: f64) -> f64 {
        (self.k * r).ln_1p().ln() - self.log_norm.ln()
    }

    fn slope(&self, r: f64) -> f64 {
        let kr = self.k * r;
        self.k / ((1.0 + kr) * kr.ln_1p())
    }

    fn log_slope(&self, r: f64) -> f64 {
        let l = (self.k * r).ln_1p();
        self.k.ln() - l - l.ln()
    }
}

/// Utility of a single application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    Sigmoidal(SigmoidalUtility),
    Logarithmic(LogarithmicUtility),
}

impl Utility {
    pub fn sigmoidal(a: f64, b: f64) -> Result<Self> {
        SigmoidalUtility::new(a, b).map(Utility::Sigmoidal)
    }

    pub fn logarithmic(k: f64, r_max: f64) -> Result<Self> {
        LogarithmicUtility::new(k, r_max).map(Utility::Logarithmic)
    }

    pub fn is_sigmoidal(&self) -> bool {
        matches!(self, Utility::Sigmoidal(_))
    }

    /// Satisfaction at rate `r >= 0`.
    ///
    /// Logarithmic utilities are not clamped: past `r_max` the value exceeds 1.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !r.is_finite() || r < 0.0 {
            return Err(domain(format!("rate must be finite and non-negative, got {r}")));
        }
        Ok(match self {
            Utility::Sigmoidal(s) => s.eval(r),
            Utility::Logarithmic(l) => l.eval(r),
        })
    }

    /// `ln U(r)` for `r > 0`, computed without forming `U` first.
    pub fn log_eval(&self, r: f64) -> Result<f64> {
        check_positive_rate(r)?;
        Ok(match self {
            Utility::Sigmoidal(s) => s.log_eval(r),
            Utility::Logarithmic(l) => l.log_eval(r),
        })
    }

    /// Slope `S(r) = d ln U / dr`.
    pub fn slope(&self, r: f64) -> Result<f64> {
        check_positive_rate(r)?;
        Ok(self.slope_unchecked(r))
    }

    /// `ln S(r)`. Finite even where `S` itself underflows, which keeps the
    /// ordering of slopes observable at very large rates.
    pub fn log_slope(&self, r: f64) -> Result<f64> {
        check_positive_rate(r)?;
        Ok(self.log_slope_unchecked(r))
    }

    pub(crate) fn slope_unchecked(&self, r: f64) -> f64 {
        match self {
            Utility::Sigmoidal(s) => s.slope(r),
            Utility::Logarithmic(l) => l.slope(r),
        }
    }

    /// Rate at which the slope equals `p`, i.e. the demand at price `p`.
    ///
    /// The result is confined to `[RATE_FLOOR, RATE_CAP]`; prices above
    /// `S(RATE_FLOOR)` return the floor and prices below `S(RATE_CAP)` the cap.
    pub fn slope_inverse(&self, p: f64) -> Result<f64> {
        if !p.is_finite() || p <= 0.0 {
            return Err(domain(format!("price must be finite and positive, got {p}")));
        }
        Ok(self.slope_inverse_unchecked(p))
    }

    pub(crate) fn log_slope_unchecked(&self, r: f64) -> f64 {
        match self {
            Utility::Sigmoidal(s) => s.log_slope(r),
            Utility::Logarithmic(l) => l.log_slope(r),
        }
    }

    // Inverted on ln S: S underflows well before the cap for steep sigmoids.
    pub(crate) fn slope_inverse_unchecked(&self, p: f64) -> f64 {
        let target = p.ln();
        if self.log_slope_unchecked(RATE_FLOOR) <= target {
            return RATE_FLOOR;
        }
        if self.log_slope_unchecked(RATE_CAP) >= target {
            return RATE_CAP;
        }
        let (lo, hi) = bisect_decreasing(|r| self.log_slope_unchecked(r), target, RATE_FLOOR, RATE_CAP, 0.0);
        let err_lo = (self.log_slope_unchecked(lo) - target).abs();
        let err_hi = (self.log_slope_unchecked(hi) - target).abs();
        if err_lo < err_hi {
            lo
        } else {
            hi
        }
    }

    /// Inflection rate: `b` for sigmoids, 0 for logarithmic utilities.
    pub fn inflection(&self) -> f64 {
        match self {
            Utility::Sigmoidal(s) => s.b,
            Utility::Logarithmic(_) => 0.0,
        }
    }
}

fn check_positive_rate(r: f64) -> Result<()> {
    if !r.is_finite() || r <= 0.0 {
        return Err(domain(format!("rate must be finite and positive, got {r}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(a: f64, b: f64) -> Utility {
        Utility::sigmoidal(a, b).unwrap()
    }

    fn log(k: f64, r_max: f64) -> Utility {
        Utility::logarithmic(k, r_max).unwrap()
    }

    /// The sigmoid exactly as written with the c, d constants.
    fn textbook_sigmoid(a: f64, b: f64, r: f64) -> f64 {
        let c = (1.0 + (a * b).exp()) / (a * b).exp();
        let d = 1.0 / (1.0 + (a * b).exp());
        c * (1.0 / (1.0 + (-a * (r - b)).exp()) - d)
    }

    /// Two-term slope using the c, d constants directly.
    fn textbook_slope(a: f64, b: f64, r: f64) -> f64 {
        let d = 1.0 / (1.0 + (a * b).exp());
        let x = (-a * (r - b)).exp();
        a * d * x / (1.0 - d * (1.0 + x)) + a * x / (1.0 + x)
    }

    #[test]
    fn constants_match_textbook_forms() {
        for &(a, b) in &[(5.0, 5.0), (4.0, 10.0), (3.0, 15.0), (0.5, 30.0), (0.01, 2.0)] {
            let Utility::Sigmoidal(s) = sig(a, b) else { unreachable!() };
            let e = f64::exp(a * b);
            assert!((s.c() - (1.0 + e) / e).abs() <= 1e-12 * s.c());
            assert!((s.d() - 1.0 / (1.0 + e)).abs() <= 1e-12 * s.d());
        }
    }

    #[test]
    fn constants_do_not_overflow() {
        let Utility::Sigmoidal(s) = sig(50.0, 20.0) else { unreachable!() };
        assert_eq!(s.c(), 1.0);
        assert!(s.d() > 0.0 && s.d() < 1e-300 || s.d() == 0.0);
        assert!((s.d() - (-1000f64).exp()).abs() <= 1e-12 * (-1000f64).exp().max(f64::MIN_POSITIVE));
        let u = Utility::Sigmoidal(s);
        assert_eq!(u.eval(0.0).unwrap(), 0.0);
        assert!(u.log_eval(1e-9).unwrap().is_finite());
        assert!(u.slope(1e-9).unwrap().is_finite());
        assert!(u.eval(30.0).unwrap() > 0.999);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(sig(5.0, 5.0).eval(0.0).unwrap(), 0.0);
        assert!((log(15.0, 100.0).eval(100.0).unwrap() - 1.0).abs() <= 1e-12);
        let direct = textbook_sigmoid(5.0, 5.0, 5.0);
        let got = sig(5.0, 5.0).eval(5.0).unwrap();
        assert!((got - direct).abs() <= 1e-14, "{got} vs {direct}");
        assert!((got - 0.5).abs() < 1e-9);
    }

    #[test]
    fn eval_agrees_with_textbook_sigmoid() {
        for &(a, b) in &[(5.0, 5.0), (3.0, 15.0), (1.0, 25.0), (0.5, 30.0)] {
            for i in 1..200 {
                let r = i as f64 * 0.3;
                let got = sig(a, b).eval(r).unwrap();
                let want = textbook_sigmoid(a, b, r);
                assert!((got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-15, "a={a} r={r}");
            }
        }
    }

    #[test]
    fn eval_rejects_bad_rates() {
        assert!(sig(1.0, 1.0).eval(f64::NAN).is_err());
        assert!(sig(1.0, 1.0).eval(f64::INFINITY).is_err());
        assert!(log(1.0, 1.0).eval(-1.0).is_err());
    }

    #[test]
    fn log_eval_examples() {
        assert!(log(1.0, 100.0).log_eval(100.0).unwrap().abs() < 1e-15);
        let want = textbook_sigmoid(5.0, 5.0, 5.0).ln();
        let got = sig(5.0, 5.0).log_eval(5.0).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.abs());
        for u in [sig(5.0, 5.0), sig(0.5, 30.0), log(15.0, 100.0), sig(50.0, 20.0)] {
            let v = u.log_eval(1e-9).unwrap();
            assert!(v.is_finite() && v < -10.0, "{v}");
        }
        assert!(sig(1.0, 1.0).log_eval(0.0).is_err());
    }

    #[test]
    fn log_eval_matches_naive_where_representable() {
        for u in [sig(5.0, 5.0), sig(2.0, 20.0), log(3.0, 100.0)] {
            for i in 1..100 {
                let r = i as f64 * 0.37;
                let naive = u.eval(r).unwrap().ln();
                if naive.is_finite() && naive != 0.0 {
                    let got = u.log_eval(r).unwrap();
                    assert!((got - naive).abs() <= 1e-9 * naive.abs() + 1e-15, "r={r} {got} {naive}");
                }
            }
        }
    }

    #[test]
    fn slope_examples() {
        let e = std::f64::consts::E;
        let s = log(1.0, 100.0).slope(e - 1.0).unwrap();
        assert!((s - 1.0 / e).abs() < 1e-15);
        let u = sig(3.0, 15.0);
        assert!(u.slope(150.0).unwrap() < u.slope(15.0).unwrap());
        assert!(u.slope(-1.0).is_err());
    }

    #[test]
    fn sigmoid_slope_matches_two_term_form() {
        for &(a, b) in &[(5.0, 5.0), (4.0, 10.0), (1.0, 25.0), (0.5, 30.0)] {
            for i in 1..300 {
                let r = i as f64 * 0.2;
                let want = textbook_slope(a, b, r);
                let got = sig(a, b).slope(r).unwrap();
                assert!((got - want).abs() <= 1e-9 * want, "a={a} r={r} {got} {want}");
            }
        }
    }

    #[test]
    fn slope_matches_central_difference() {
        let utilities = [sig(5.0, 5.0), sig(3.0, 15.0), sig(0.5, 30.0), log(15.0, 100.0), log(1.0, 100.0)];
        for u in utilities {
            for &r in &[0.01f64, 0.5, 1.0, 2.5, 7.0, 12.0, 20.0, 45.0] {
                let h = 1e-4 * r.min(0.2);
                let fd = (u.log_eval(r + h).unwrap() - u.log_eval(r - h).unwrap()) / (2.0 * h);
                let s = u.slope(r).unwrap();
                assert!((s - fd).abs() <= 1e-5 * s, "{u:?} r={r} s={s} fd={fd}");
            }
        }
    }

    #[test]
    fn slope_inverse_examples() {
        let u = log(1.0, 100.0);
        let p = 1.0 / (11.0 * 11f64.ln());
        assert!((u.slope_inverse(p).unwrap() - 10.0).abs() < 1e-8);

        for u in [sig(5.0, 5.0), sig(2.0, 20.0), sig(0.5, 30.0), log(12.0, 100.0)] {
            let r = u.slope_inverse(u.slope(7.0).unwrap()).unwrap();
            assert!((r - 7.0).abs() <= 1e-8 * 7.0, "{u:?} {r}");
        }

        let u = sig(3.0, 15.0);
        assert_eq!(u.slope_inverse(1e30).unwrap(), RATE_FLOOR);
        assert_eq!(log(3.0, 100.0).slope_inverse(1e-300).unwrap(), RATE_CAP);
        assert!(u.slope_inverse(1e-300).unwrap() > 100.0);
        assert!(u.slope_inverse(0.0).is_err());
        assert!(u.slope_inverse(-2.0).is_err());
    }

    #[test]
    fn slope_inverse_meets_price_tolerance() {
        for u in [sig(5.0, 5.0), sig(4.0, 10.0), sig(1.0, 25.0), log(9.0, 100.0)] {
            for &p in &[1e-3, 0.01, 0.1, 0.45, 0.9, 2.0, 4.9, 10.0, 1e3] {
                let r = u.slope_inverse(p).unwrap();
                let s = u.slope(r).unwrap();
                assert!((s - p).abs() <= 1e-10 * p, "{u:?} p={p} r={r} s={s}");
            }
        }
    }

    #[test]
    fn inflection_examples() {
        assert_eq!(sig(3.0, 15.0).inflection(), 15.0);
        assert_eq!(log(9.0, 100.0).inflection(), 0.0);
        assert_eq!(sig(0.5, 30.0).inflection(), 30.0);
    }

    #[test]
    fn constructors_reject_nonpositive_parameters() {
        assert!(Utility::sigmoidal(0.0, 1.0).is_err());
        assert!(Utility::sigmoidal(1.0, -1.0).is_err());
        assert!(Utility::logarithmic(f64::NAN, 1.0).is_err());
        assert!(Utility::logarithmic(1.0, 0.0).is_err());
    }
}
