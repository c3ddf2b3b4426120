//! Floating-point plumbing: compensated accumulation, signed log-magnitudes,
//! integer rounding with a guard band, and quadrature wrappers.

use num_complex::Complex64;
use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// Double-double accumulator for real sums.
#[derive(Clone, Copy, Debug)]
pub struct Accumulator {
    acc: TwoFloat,
    abs: f64,
}

impl Default for Accumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl Accumulator {
    pub fn new() -> Self {
        Self {
            acc: TwoFloat::from(0.0),
            abs: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        self.acc += x;
        self.abs += x.abs();
    }

    pub fn value(&self) -> f64 {
        f64::from(self.acc)
    }

    /// Sum of absolute values seen so far; scales the rounding estimate.
    pub fn abs_sum(&self) -> f64 {
        self.abs
    }
}

/// Double-double accumulator for complex sums.
#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexAccumulator {
    re: Accumulator,
    im: Accumulator,
}

impl ComplexAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }

    pub fn abs_sum(&self) -> f64 {
        self.re.abs_sum().hypot(self.im.abs_sum())
    }
}

/// Sum a slice with double-double accumulation.
pub fn dd_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// A real number stored as `sign * exp(log_abs)`.
///
/// `sign` is one of -1, 0, +1 and `log_abs == -inf` exactly when `sign == 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogValue {
    pub sign: f64,
    pub log_abs: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        sign: 0.0,
        log_abs: f64::NEG_INFINITY,
    };
    pub const ONE: LogValue = LogValue {
        sign: 1.0,
        log_abs: 0.0,
    };

    pub fn new(sign: f64, log_abs: f64) -> Self {
        if sign == 0.0 || log_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self {
                sign: sign.signum(),
                log_abs,
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: x.signum(),
                log_abs: x.abs().ln(),
            }
        }
    }

    /// Positive value given by its logarithm.
    pub fn from_ln(ln: f64) -> Self {
        Self::new(1.0, ln)
    }

    pub fn to_f64(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.log_abs.exp()
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0.0
    }

    pub fn neg(self) -> Self {
        Self {
            sign: -self.sign,
            log_abs: self.log_abs,
        }
    }

    pub fn mul(self, o: Self) -> Self {
        Self::new(self.sign * o.sign, self.log_abs + o.log_abs)
    }

    pub fn div(self, o: Self) -> Self {
        Self::new(self.sign * o.sign, self.log_abs - o.log_abs)
    }

    /// Multiply by `exp(s)`.
    pub fn scale_ln(self, s: f64) -> Self {
        Self::new(self.sign, self.log_abs + s)
    }

    pub fn sqrt(self) -> Self {
        debug_assert!(self.sign >= 0.0);
        Self::new(self.sign, 0.5 * self.log_abs)
    }

    pub fn add(self, o: Self) -> Self {
        signed_log_sum(&[self, o])
    }

    pub fn sub(self, o: Self) -> Self {
        signed_log_sum(&[self, o.neg()])
    }
}

/// Signed log-sum-exp: scale by the largest magnitude, accumulate the scaled
/// terms in double-double, and return the result as a [`LogValue`].
pub fn signed_log_sum(terms: &[LogValue]) -> LogValue {
    signed_log_sum_with_abs(terms).0
}

/// Like [`signed_log_sum`] but also returns `ln Σ|t|`, the scale of rounding.
pub fn signed_log_sum_with_abs(terms: &[LogValue]) -> (LogValue, f64) {
    let m = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| t.log_abs)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return (LogValue::ZERO, f64::NEG_INFINITY);
    }
    let mut acc = Accumulator::new();
    for t in terms.iter().filter(|t| !t.is_zero()) {
        acc.add(t.sign * (t.log_abs - m).exp());
    }
    let s = acc.value();
    let mut v = LogValue::from_f64(s);
    v.log_abs += m;
    if v.is_zero() {
        v = LogValue::ZERO;
    }
    (v, acc.abs_sum().ln() + m)
}

/// A complex number stored as `phase * exp(log_abs)` with `|phase| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogComplex {
    pub log_abs: f64,
    pub phase: Complex64,
}

impl LogComplex {
    pub fn from_complex(z: Complex64) -> Self {
        let r = z.norm();
        if r == 0.0 {
            Self {
                log_abs: f64::NEG_INFINITY,
                phase: Complex64::new(0.0, 0.0),
            }
        } else {
            Self {
                log_abs: r.ln(),
                phase: z / r,
            }
        }
    }

    /// Value `exp(w)` for complex `w`, without overflow.
    pub fn exp(w: Complex64) -> Self {
        Self {
            log_abs: w.re,
            phase: Complex64::from_polar(1.0, w.im),
        }
    }

    pub fn mul(self, o: Self) -> Self {
        let p = self.phase * o.phase;
        let n = p.norm();
        Self {
            log_abs: self.log_abs + o.log_abs,
            phase: if n > 0.0 { p / n } else { p },
        }
    }

    pub fn to_complex(self) -> Complex64 {
        self.phase * self.log_abs.exp()
    }
}

/// Half-ulp guarded ceiling: values within 1e-12 (relative) of an integer
/// are snapped to it first.
pub fn ceil_guarded(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r as i64
    } else {
        x.ceil() as i64
    }
}

/// Half-ulp guarded floor; see [`ceil_guarded`].
pub fn floor_guarded(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r as i64
    } else {
        x.floor() as i64
    }
}

/// Parity indicator: 0 for even, 1 for odd.
pub fn chi(n: i64) -> i64 {
    n.rem_euclid(2)
}

/// Adaptive Gauss-Kronrod quadrature on a finite interval.
///
/// Returns `(value, abs_error_estimate)`. Fails with the achieved error when
/// the requested tolerance is not met.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)> {
    use gkquad::single::Integrator;
    use gkquad::Tolerance;
    let r = Integrator::new(f)
        .tolerance(Tolerance::AbsOrRel(abs_tol, rel_tol))
        .max_iters(2000)
        .run(a..b);
    match r.estimate_delta() {
        Ok((v, d)) if v.is_finite() => Ok((v, d)),
        Ok((v, _)) => Err(Error::NonFinite(format!("integral = {v}"))),
        Err(_) => {
            // SAFETY: only reads the partial estimate to report the achieved error.
            let (_, d) = unsafe { r.estimate_delta_unchecked() };
            Err(Error::Quadrature {
                achieved: d,
                wanted: abs_tol,
            })
        }
    }
}

/// Gauss-Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    use gauss_quad::GaussLegendre;
    use std::num::NonZeroUsize;
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut pairs: Vec<(f64, f64)> = rule
        .iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn guarded_rounding() {
        assert_eq!(ceil_guarded(3.0000000000000004), 3);
        assert_eq!(ceil_guarded(2.9999999999999996), 3);
        assert_eq!(ceil_guarded(2.25), 3);
        assert_eq!(ceil_guarded(-1.5), -1);
        assert_eq!(floor_guarded(2.9999999999999996), 3);
        assert_eq!(floor_guarded(2.75), 2);
        // 0.1 * 30 is 3.0000000000000004 in binary64
        assert_eq!(ceil_guarded(0.1 * 30.0), 3);
    }

    #[test]
    fn log_sum_cancels_exactly() {
        let a = LogValue::from_f64(3.5);
        assert!(a.sub(a).is_zero());
        let s = signed_log_sum(&[
            LogValue::from_f64(1e300),
            LogValue::from_f64(1e300),
            LogValue::from_f64(-1e300),
        ]);
        assert!((s.log_abs - 1e300f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_polynomial_exact() {
        let (x, w) = gauss_legendre(10, -1.0, 3.0);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(7)).sum();
        assert!((v - (3f64.powi(8) - 1.0) / 8.0).abs() < 1e-10);
    }

    #[test]
    fn integrate_smooth() {
        let (v, e) = integrate(|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-13, 0.0).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!(e < 1e-12);
    }

    proptest! {
        #[test]
        fn log_sum_matches_direct(xs in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let direct = dd_sum(xs.iter().copied());
            let terms: Vec<LogValue> = xs.iter().map(|&x| LogValue::from_f64(x)).collect();
            let s = signed_log_sum(&terms).to_f64();
            let scale: f64 = xs.iter().map(|x| x.abs()).sum();
            prop_assert!((s - direct).abs() <= 1e-14 * scale.max(1e-300));
        }

        #[test]
        fn log_value_product(a in -1e5f64..1e5, b in -1e5f64..1e5) {
            let p = LogValue::from_f64(a).mul(LogValue::from_f64(b)).to_f64();
            prop_assert!((p - a * b).abs() <= 1e-13 * (a * b).abs());
        }
    }
}
