//! q-deformed special functions: q-Pochhammer symbols, the theta series
//! `Θ(z|q) = Σ q^{k²} z^k`, Jacobi's ϑ₂/ϑ₃/ϑ₄, Gosper's q-trigonometric
//! functions, the q-exponential and the small-coupling expansions used for
//! the oscillatory kernel.
//!
//! Every series evaluation returns a [`SeriesResult`] carrying a truncation
//! plus rounding error bound.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::numeric::{Accumulator, ComplexAccumulator, LogValue};

const EPS: f64 = f64::EPSILON;
/// ln(1e16): relative size of the first omitted theta term.
const LN_TARGET: f64 = 36.841_361_487_904_734;

/// Validated nome `q = e^{-g}` with `0 < q < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QParam {
    q: f64,
    g: f64,
}

impl QParam {
    pub fn from_q(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return domain(format!("q must lie in (0,1), got {q}"));
        }
        Ok(Self { q, g: -q.ln() })
    }

    pub fn from_g(g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return domain(format!("g_s must be positive and finite, got {g}"));
        }
        let q = (-g).exp();
        if !(q > 0.0 && q < 1.0) {
            return domain(format!("e^(-g_s) = {q} is not inside (0,1)"));
        }
        Ok(Self { q, g })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// The coupling `g_s = -ln q`.
    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn ln_q(&self) -> f64 {
        -self.g
    }
}

/// Complex nome, used on the partition-function path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexQParam {
    q: Complex64,
    g: Complex64,
}

impl ComplexQParam {
    pub fn from_g(g: Complex64) -> Result<Self> {
        let q = (-g).exp();
        let r = q.norm();
        if !(r > 0.0 && r < 1.0) {
            return domain(format!("|e^(-g_s)| must lie in (0,1), got {r}"));
        }
        Ok(Self { q, g })
    }

    pub fn q(&self) -> Complex64 {
        self.q
    }

    pub fn g(&self) -> Complex64 {
        self.g
    }
}

/// Value of a truncated series with a bound on the neglected part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesResult<T = f64> {
    pub value: T,
    pub abs_error_bound: f64,
    pub terms_used: usize,
}

/// Length of a q-Pochhammer product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PochLength {
    Finite(usize),
    Infinity,
}

/// `(z;q)_n = Π_{k<n} (1 - z q^k)`, finite or infinite.
///
/// The infinite product stops once three consecutive factors differ from one
/// by less than 1e-17; the tail bound is `|P| (exp(|z q^K|/(1-|q|)) - 1)`.
pub fn q_pochhammer(z: Complex64, q: Complex64, n: PochLength) -> Result<SeriesResult<Complex64>> {
    let aq = q.norm();
    if let PochLength::Infinity = n {
        if aq >= 1.0 {
            return domain(format!("|q| = {aq} must be < 1 for the infinite product"));
        }
    }
    let mut p = Complex64::new(1.0, 0.0);
    let mut zk = z;
    let mut used = 0usize;
    match n {
        PochLength::Finite(n) => {
            for _ in 0..n {
                p *= Complex64::new(1.0, 0.0) - zk;
                zk *= q;
                used += 1;
            }
            Ok(SeriesResult {
                value: p,
                abs_error_bound: 2.0 * EPS * used as f64 * p.norm(),
                terms_used: used,
            })
        }
        PochLength::Infinity => {
            let mut small = 0;
            while small < 3 {
                if zk.norm() < 1e-17 {
                    small += 1;
                } else {
                    small = 0;
                }
                p *= Complex64::new(1.0, 0.0) - zk;
                zk *= q;
                used += 1;
                if used > 10_000_000 {
                    return Err(Error::NonFinite("q-Pochhammer did not settle".into()));
                }
            }
            let tail = p.norm() * (zk.norm() / (1.0 - aq)).exp_m1();
            Ok(SeriesResult {
                value: p,
                abs_error_bound: tail + 2.0 * EPS * used as f64 * p.norm(),
                terms_used: used,
            })
        }
    }
}

/// Real-argument `(z;q)_n`.
pub fn q_pochhammer_real(z: f64, q: f64, n: PochLength) -> Result<SeriesResult<f64>> {
    if !(q.abs() < 1.0) && n == PochLength::Infinity {
        return domain(format!("|q| = {} must be < 1", q.abs()));
    }
    let r = q_pochhammer(Complex64::new(z, 0.0), Complex64::new(q, 0.0), n)?;
    Ok(SeriesResult {
        value: r.value.re,
        abs_error_bound: r.abs_error_bound,
        terms_used: r.terms_used,
    })
}

/// Series form `(z;q)_∞ = Σ_k q^{k(k-1)/2} (-z)^k / (q;q)_k`, truncated at `terms`.
pub fn q_pochhammer_series(z: f64, q: f64, terms: usize) -> f64 {
    let mut acc = Accumulator::new();
    let mut t = 1.0;
    for k in 0..terms {
        acc.add(t);
        let k1 = (k + 1) as i32;
        t *= -z * q.powi(k1 - 1) / (1.0 - q.powi(k1));
    }
    acc.value()
}

/// `ln (z;q)_∞` for real `z < 1`, `0 < q < 1`, summed as `Σ ln(1 - z q^k)`.
pub fn ln_q_pochhammer_inf(z: f64, q: f64) -> f64 {
    debug_assert!(z < 1.0 && (0.0..1.0).contains(&q));
    let mut acc = Accumulator::new();
    let mut zk = z;
    let mut small = 0;
    while small < 3 {
        if zk.abs() < 1e-17 {
            small += 1;
        } else {
            small = 0;
        }
        acc.add((-zk).ln_1p());
        zk *= q;
    }
    acc.value()
}

/// `ln (e^{-g}; e^{-g})_∞`.
///
/// For `g < π` the Dedekind-eta transformation is used:
/// `ln(q;q)_∞ = ½ln(2π/g) − π²/(6g) + g/24 + ln(p;p)_∞` with `p = e^{-4π²/g}`,
/// which stays accurate as `g → 0` where the direct product needs `O(1/g)`
/// factors and underflows.
pub fn ln_euler(g: f64) -> f64 {
    debug_assert!(g > 0.0);
    if g < PI {
        let p = (-4.0 * PI * PI / g).exp();
        0.5 * (2.0 * PI / g).ln() - PI * PI / (6.0 * g) + g / 24.0 + ln_q_pochhammer_inf(p, p)
    } else {
        let q = (-g).exp();
        ln_q_pochhammer_inf(q, q)
    }
}

/// Symmetric truncation window for `Σ q^{k²} z^k`.
pub fn theta_window(ln_abs_z: f64, ln_inv_q: f64) -> usize {
    let core = (LN_TARGET / ln_inv_q).sqrt().ceil();
    let shift = (ln_abs_z.abs() / (2.0 * ln_inv_q)).ceil();
    (core + shift) as usize + 2
}

fn check_theta_args(z_norm: f64, q_norm: f64) -> Result<()> {
    if z_norm == 0.0 || !z_norm.is_finite() {
        return domain("theta argument z must be nonzero and finite");
    }
    if !(q_norm > 0.0 && q_norm < 1.0) {
        return domain(format!("theta nome must satisfy 0 < |q| < 1, got {q_norm}"));
    }
    Ok(())
}

/// Scaled real theta sums: returns `(S, m, A)` with
/// `Σ_{|k|≤kmax} k^p q^{k²} |z|^{±k} (±1) = S e^m` and `A e^m = Σ|terms|`.
/// `m = (ln|z|)²/(4 ln(1/q))` bounds every exponent, so `S` never overflows.
fn theta_scaled(z: f64, q: f64, kmax: usize, deriv: bool) -> (f64, f64, f64) {
    let a = -q.ln();
    let lz = sym_ln_abs(z);
    let flip = if z.abs() >= 1.0 { 1.0 } else { -1.0 };
    let m = lz * lz / (4.0 * a);
    let neg = z < 0.0;
    let mut acc = Accumulator::new();
    let mut arg_max: f64 = 0.0;
    if !deriv {
        acc.add((-m).exp());
    }
    for k in (1..=kmax).rev() {
        let kf = k as f64;
        let base = -a * kf * kf - m;
        let up = (base + kf * lz).exp();
        let down = (base - kf * lz).exp();
        let pair = if deriv { flip * kf * (up - down) } else { up + down };
        acc.add(if neg && k % 2 == 1 { -pair } else { pair });
        arg_max = arg_max.max((base + kf * lz + m).abs());
    }
    // exp(x) carries relative error ~|x|ε, which dominates for huge arguments
    (acc.value(), m, acc.abs_sum() * (1.0 + 0.25 * arg_max))
}

/// Real theta series truncated at `|k| ≤ kmax`, summed in `±k` pairs so that
/// `Θ(z) = Θ(1/z)` holds bit-for-bit.
pub fn theta_with_order(z: f64, q: f64, kmax: usize) -> Result<SeriesResult> {
    check_theta_args(z.abs(), q)?;
    let (s, m, abs) = theta_scaled(z, q, kmax, false);
    let value = s * m.exp();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("Θ({z}|{q}) overflows; use theta_log")));
    }
    let tail = theta_tail(-q.ln(), sym_ln_abs(z), kmax, 0);
    Ok(SeriesResult {
        value,
        abs_error_bound: tail + 4.0 * EPS * abs * m.exp(),
        terms_used: 2 * kmax + 1,
    })
}

/// Geometric majorant for the omitted terms `|k| > kmax` of
/// `Σ |k|^p q^{k²} |z|^k`.
fn theta_tail(a: f64, lz: f64, kmax: usize, power: i32) -> f64 {
    theta_tail_ln(a, lz, kmax, power, 0.0)
}

/// [`theta_tail`] divided by `e^m`.
fn theta_tail_ln(a: f64, lz: f64, kmax: usize, power: i32, m: f64) -> f64 {
    let k1 = (kmax + 1) as f64;
    let mut total = 0.0;
    for s in [1.0, -1.0] {
        let first = (-a * k1 * k1 + s * k1 * lz - m).exp() * k1.powi(power);
        // ratio of consecutive terms is q^{2k+1}|z|^{±1}, decreasing in k
        let ratio = (-a * (2.0 * k1 + 1.0) + s * lz).exp() * ((k1 + 1.0) / k1).powi(power);
        total += if ratio < 1.0 {
            first / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
    }
    total
}

/// `Θ(z|q) = Σ_k q^{k²} z^k` for real `z ≠ 0`, `0 < q < 1`.
pub fn theta(z: f64, q: f64) -> Result<SeriesResult> {
    check_theta_args(z.abs(), q)?;
    let k = theta_window(sym_ln_abs(z), -q.ln());
    theta_with_order(z, q, k)
}

/// `Θ(z|q)` as a signed logarithm, for arguments where the value overflows.
/// The second component is the absolute error bound relative to `e^{ln|Θ|}`
/// expressed as `ln` of the bound.
pub fn theta_log(z: f64, q: f64) -> Result<(LogValue, f64)> {
    check_theta_args(z.abs(), q)?;
    let a = -q.ln();
    let lz = sym_ln_abs(z);
    let kmax = theta_window(lz, a);
    let (s, m, abs) = theta_scaled(z, q, kmax, false);
    let err = theta_tail_ln(a, lz, kmax, 0, m) + 4.0 * EPS * abs;
    Ok((LogValue::from_f64(s).scale_ln(m), err.ln() + m))
}

/// `Θ'(z|q)` as a signed logarithm; see [`theta_log`].
pub fn theta_prime_log(z: f64, q: f64) -> Result<(LogValue, f64)> {
    check_theta_args(z.abs(), q)?;
    let a = -q.ln();
    let lz = sym_ln_abs(z);
    let kmax = theta_window(lz, a) + 2;
    let (s, m, abs) = theta_scaled(z, q, kmax, true);
    let err = theta_tail_ln(a, lz, kmax, 1, m) + 4.0 * EPS * abs;
    let lnz = z.abs().ln();
    let v = LogValue::from_f64(s).scale_ln(m - lnz);
    let v = if z < 0.0 { v.neg() } else { v };
    Ok((v, err.ln() + m - lnz))
}

/// `|ln|z||` taken from whichever of `z`, `1/z` has modulus ≥ 1, so that
/// `Θ(z)` and `Θ(1/z)` see the same logarithm.
fn sym_ln_abs(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        z.abs().ln()
    } else {
        (1.0 / z.abs()).ln()
    }
}

/// `Θ'(z|q) = z⁻¹ Σ_k k q^{k²} z^k` for real arguments.
pub fn theta_prime(z: f64, q: f64) -> Result<SeriesResult> {
    let (v, err) = theta_prime_log(z, q)?;
    let value = v.to_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("Θ'({z}|{q}) overflows; use theta_prime_log")));
    }
    Ok(SeriesResult {
        value,
        abs_error_bound: err.exp(),
        terms_used: 2 * (theta_window(sym_ln_abs(z), -q.ln()) + 2),
    })
}

/// Complex theta series `Σ q^{k²} z^k`.
pub fn theta_complex(z: Complex64, q: Complex64) -> Result<SeriesResult<Complex64>> {
    check_theta_args(z.norm(), q.norm())?;
    let lq = q.ln();
    let lz = z.ln();
    let kmax = theta_window(lz.re, -lq.re);
    let mut acc = ComplexAccumulator::new();
    acc.add(Complex64::new(1.0, 0.0));
    for k in (1..=kmax).rev() {
        let kf = k as f64;
        let base = lq * (kf * kf);
        acc.add((base + lz * kf).exp() + (base - lz * kf).exp());
    }
    let tail = theta_tail(-lq.re, lz.re, kmax, 0);
    Ok(SeriesResult {
        value: acc.value(),
        abs_error_bound: tail + 4.0 * EPS * acc.abs_sum(),
        terms_used: 2 * kmax + 1,
    })
}

/// Jacobi triple product `(q²;q²)_∞ (-zq;q²)_∞ (-q/z;q²)_∞`.
pub fn theta_triple_product(z: f64, q: f64) -> Result<SeriesResult> {
    check_theta_args(z.abs(), q)?;
    let q2 = q * q;
    let a = q_pochhammer_real(q2, q2, PochLength::Infinity)?;
    let b = q_pochhammer_real(-z * q, q2, PochLength::Infinity)?;
    let c = q_pochhammer_real(-q / z, q2, PochLength::Infinity)?;
    let v = a.value * b.value * c.value;
    let rel = a.abs_error_bound / a.value.abs()
        + b.abs_error_bound / b.value.abs().max(f64::MIN_POSITIVE)
        + c.abs_error_bound / c.value.abs().max(f64::MIN_POSITIVE);
    Ok(SeriesResult {
        value: v,
        abs_error_bound: rel * v.abs() + 4.0 * EPS * v.abs(),
        terms_used: a.terms_used + b.terms_used + c.terms_used,
    })
}

/// Which of Jacobi's theta functions to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobiKind {
    Two,
    Three,
    Four,
}

/// `ϑ₂, ϑ₃, ϑ₄(ζ|ω)` with nome `e^{iπω}`:
/// `ϑ₃ = Σ e^{iπωk² + 2ikζ}`, `ϑ₄` adds `(-1)^k`, `ϑ₂` shifts `k → k + ½`.
pub fn jacobi_theta(kind: JacobiKind, zeta: Complex64, omega: Complex64) -> Result<SeriesResult<Complex64>> {
    if !(omega.im > 0.0) {
        return domain(format!("Im ω must be positive, got {}", omega.im));
    }
    let i = Complex64::new(0.0, 1.0);
    let a = i * PI * omega;
    let decay = PI * omega.im;
    let kmax = theta_window(2.0 * zeta.im, decay) + 1;
    let half = if kind == JacobiKind::Two { 0.5 } else { 0.0 };
    let term = |m: f64| (a * (m * m) + i * (2.0 * m) * zeta).exp();
    let mut acc = ComplexAccumulator::new();
    if kind != JacobiKind::Two {
        acc.add(Complex64::new(1.0, 0.0));
    }
    let start = if kind == JacobiKind::Two { 0 } else { 1 };
    for k in (start..=kmax).rev() {
        let m = k as f64 + half;
        let mut pair = term(m) + term(-m);
        if kind == JacobiKind::Four && k % 2 == 1 {
            pair = -pair;
        }
        acc.add(pair);
    }
    let m1 = kmax as f64 + 1.0 + half;
    let first = (-decay * m1 * m1 + 2.0 * m1 * zeta.im.abs()).exp();
    let ratio = (-decay * (2.0 * m1 + 1.0) + 2.0 * zeta.im.abs()).exp();
    let tail = if ratio < 1.0 { 2.0 * first / (1.0 - ratio) } else { f64::INFINITY };
    Ok(SeriesResult {
        value: acc.value(),
        abs_error_bound: tail + 4.0 * EPS * acc.abs_sum(),
        terms_used: 2 * kmax + 1,
    })
}

/// `∂ϑ/∂ζ` for the same lattice sums as [`jacobi_theta`].
pub fn jacobi_theta_prime(kind: JacobiKind, zeta: Complex64, omega: Complex64) -> Result<SeriesResult<Complex64>> {
    if !(omega.im > 0.0) {
        return domain(format!("Im ω must be positive, got {}", omega.im));
    }
    let i = Complex64::new(0.0, 1.0);
    let a = i * PI * omega;
    let decay = PI * omega.im;
    let kmax = theta_window(2.0 * zeta.im, decay) + 3;
    let half = if kind == JacobiKind::Two { 0.5 } else { 0.0 };
    let term = |m: f64| i * (2.0 * m) * (a * (m * m) + i * (2.0 * m) * zeta).exp();
    let mut acc = ComplexAccumulator::new();
    let start = if kind == JacobiKind::Two { 0 } else { 1 };
    for k in (start..=kmax).rev() {
        let m = k as f64 + half;
        let mut pair = term(m) + term(-m);
        if kind == JacobiKind::Four && k % 2 == 1 {
            pair = -pair;
        }
        acc.add(pair);
    }
    let m1 = kmax as f64 + 1.0 + half;
    let first = 2.0 * m1 * (-decay * m1 * m1 + 2.0 * m1 * zeta.im.abs()).exp();
    let ratio = (m1 + 1.0) / m1 * (-decay * (2.0 * m1 + 1.0) + 2.0 * zeta.im.abs()).exp();
    let tail = if ratio < 1.0 { 2.0 * first / (1.0 - ratio) } else { f64::INFINITY };
    Ok(SeriesResult {
        value: acc.value(),
        abs_error_bound: tail + 4.0 * EPS * acc.abs_sum(),
        terms_used: 2 * kmax + 1,
    })
}

/// Gosper's q-sine or q-cosine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GosperKind {
    Sin,
    Cos,
}

/// Raw product form of `sin_q(πz)`:
/// `q^{(z-½)²} (q^{2z};q²)_∞ (q^{2-2z};q²)_∞ / (q;q²)_∞²`.
pub fn gosper_sin_product(z: Complex64, q: f64) -> Result<SeriesResult<Complex64>> {
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("Gosper functions need q in (0,1), got {q}"));
    }
    let lq = q.ln();
    let q2 = Complex64::new(q * q, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let a = q_pochhammer((2.0 * z * lq).exp(), q2, PochLength::Infinity)?;
    let b = q_pochhammer(((2.0 * one - 2.0 * z) * lq).exp(), q2, PochLength::Infinity)?;
    let c = q_pochhammer_real(q, q * q, PochLength::Infinity)?;
    let pre = ((z - 0.5) * (z - 0.5) * lq).exp();
    let v = pre * a.value * b.value / (c.value * c.value);
    let bound = pre.norm()
        * (a.abs_error_bound * b.value.norm() + b.abs_error_bound * a.value.norm())
        / (c.value * c.value)
        + 2.0 * c.abs_error_bound / c.value * v.norm()
        + 8.0 * EPS * v.norm();
    Ok(SeriesResult {
        value: v,
        abs_error_bound: bound,
        terms_used: a.terms_used + b.terms_used + c.terms_used,
    })
}

/// `sin_q(πz)` or `cos_q(πz) = sin_q(π(z+½))` for base `q ∈ (0,1)`.
///
/// Arguments with `|Re z| > 1.5` are first reduced with the exact
/// antiperiodicity `sin_q(π(z+1)) = -sin_q(πz)`.
pub fn gosper_trig(kind: GosperKind, z: Complex64, q: f64) -> Result<SeriesResult<Complex64>> {
    let mut w = match kind {
        GosperKind::Sin => z,
        GosperKind::Cos => z + 0.5,
    };
    let mut sign = 1.0;
    if w.re.abs() > 1.5 {
        let m = w.re.round();
        w -= m;
        if (m as i64) % 2 != 0 {
            sign = -1.0;
        }
    }
    let mut r = gosper_sin_product(w, q)?;
    r.value *= sign;
    Ok(r)
}

/// `d/dz sin_q(πz)` for real `z`, differentiating the product factor by
/// factor.
pub fn gosper_sin_derivative(z: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("Gosper functions need q in (0,1), got {q}"));
    }
    let mut w = z;
    let mut sign = 1.0;
    if w.abs() > 1.5 {
        let m = w.round();
        w -= m;
        if (m as i64) % 2 != 0 {
            sign = -1.0;
        }
    }
    let lq = q.ln();
    let c = q_pochhammer_real(q, q * q, PochLength::Infinity)?.value;
    // factors f and df/dz of q^{(w-1/2)^2} Π (1 - q^{2w+2k})(1 - q^{2-2w+2k})
    let mut f = vec![(lq * (w - 0.5) * (w - 0.5)).exp()];
    let mut df = vec![f[0] * 2.0 * (w - 0.5) * lq];
    let mut k = 0.0;
    let mut small = 0;
    while small < 3 {
        let a = (lq * (2.0 * w + 2.0 * k)).exp();
        let b = (lq * (2.0 - 2.0 * w + 2.0 * k)).exp();
        f.push(1.0 - a);
        df.push(-2.0 * lq * a);
        f.push(1.0 - b);
        df.push(2.0 * lq * b);
        if a.max(b) < 1e-17 {
            small += 1;
        } else {
            small = 0;
        }
        k += 1.0;
    }
    let mut acc = Accumulator::new();
    for j in 0..f.len() {
        let mut p = df[j];
        for (i, fi) in f.iter().enumerate() {
            if i != j {
                p *= fi;
            }
        }
        acc.add(p);
    }
    Ok(sign * acc.value() / (c * c))
}

/// `e_q(z) = 1/(z;q)_∞`, `|z| < 1`.
pub fn q_exponential(z: Complex64, q: Complex64) -> Result<SeriesResult<Complex64>> {
    if !(z.norm() < 1.0) {
        return domain(format!("q-exponential requires |z| < 1, got {}", z.norm()));
    }
    let p = q_pochhammer(z, q, PochLength::Infinity)?;
    let n = p.value.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Pole(format!("(z;q)_inf = {} at z = {z}", p.value)));
    }
    let v = 1.0 / p.value;
    Ok(SeriesResult {
        value: v,
        abs_error_bound: p.abs_error_bound / (n * n) + 2.0 * EPS * v.norm(),
        terms_used: p.terms_used,
    })
}

/// Right-hand side of the modular expansion of `1/e_q(z) = (z;q)_∞` for real
/// `z > 0`, with the cosine sum truncated after `kmax` terms.
pub fn q_exponential_series_rhs(z: f64, q: f64, kmax: usize) -> Result<SeriesResult> {
    if !(z > 0.0) {
        return domain("the expansion is exposed for real positive z only");
    }
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("q must lie in (0,1), got {q}"));
    }
    let lq = q.ln();
    let lz = z.ln();
    let mut acc = Accumulator::new();
    let mut last = 0.0;
    for k in 1..=kmax {
        let kf = k as f64;
        let x = 2.0 * PI * PI * kf / lq;
        // exp(x)/sinh(x) = 2/(1 - e^{-2x}) with x < 0
        let t = (2.0 * PI * kf * lz / lq).cos() * (2.0 * x).exp() * 2.0 / ((2.0 * x).exp() - 1.0) / kf;
        let t = -t;
        acc.add(t);
        last = t.abs();
    }
    let p = q_pochhammer_real(q / z, q, PochLength::Infinity)?;
    let expo = 0.5 * lz - (1.0 / lq) * (-PI * PI / 3.0 + 0.5 * lz * lz) - lq / 12.0 + acc.value();
    let v = 2.0 * (PI * lz / lq).sin() / p.value * expo.exp();
    let r = (2.0 * PI * PI / lq).exp();
    let tail = if kmax == 0 { 1.0 } else { last * r / (1.0 - r) * 2.0 };
    Ok(SeriesResult {
        value: v,
        abs_error_bound: v.abs() * (tail.exp_m1() + 16.0 * EPS * (1.0 + expo.abs())),
        terms_used: kmax,
    })
}

/// Pieces of the small-coupling form
/// `Θ(-e^{φ+s g/2}|e^{-g}) = C e^{φ²/(4g)} t(φ)` with
/// `C = (e^{-2g};e^{-2g})_∞ e^{-π²/(6g) - g/48}` and
/// `t(φ) = 2cos(πφ/(2g) + sπ/4) exp[sφ/4 + S(φ)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallGFactor {
    /// `t(φ)`
    pub t: f64,
    /// `dt/dφ`
    pub dt: f64,
    /// magnitude of the first omitted correction term, relative
    pub tail: f64,
}

/// `ln C` for the small-coupling form.
pub fn smallg_ln_prefactor(g: f64) -> f64 {
    ln_euler(2.0 * g) - PI * PI / (6.0 * g) - g / 48.0
}

/// Oscillating factor of the small-coupling form and its derivative.
pub fn smallg_factor(phi: f64, sign: f64, g: f64, kmax: usize) -> SmallGFactor {
    let mut s = 0.0;
    let mut ds = 0.0;
    let mut last = 0.0;
    for k in 1..=kmax {
        let kf = k as f64;
        let x = PI * PI * kf / g;
        // e^{-x} / sinh(-x) = -2 e^{-2x} / (1 - e^{-2x})
        let c = -2.0 * (-2.0 * x).exp() / (-(-2.0 * x).exp_m1()) / kf;
        let arg = PI * kf * phi / g + sign * PI * kf / 2.0 - PI * kf;
        s += arg.cos() * c;
        ds -= arg.sin() * c * PI * kf / g;
        last = c.abs();
    }
    let theta = PI * phi / (2.0 * g) + sign * PI / 4.0;
    let e = (sign * phi / 4.0 + s).exp();
    let t = 2.0 * theta.cos() * e;
    let dt = t * (sign / 4.0 + ds) - 2.0 * theta.sin() * (PI / (2.0 * g)) * e;
    SmallGFactor {
        t,
        dt,
        tail: last * (-PI * PI / g).exp(),
    }
}

/// The small-coupling expansion of `Θ(-e^{φ ± g/2}|e^{-g})` as a value.
pub fn theta_smallgs_expansion(phi: f64, sign: i32, g: f64, kmax: usize) -> Result<SeriesResult> {
    if !(g > 0.0) {
        return domain(format!("g_s must be positive, got {g}"));
    }
    if sign != 1 && sign != -1 {
        return domain("sign must be +1 or -1");
    }
    let f = smallg_factor(phi, sign as f64, g, kmax);
    let ln_pre = smallg_ln_prefactor(g) + phi * phi / (4.0 * g);
    let v = ln_pre.exp() * f.t;
    let scale = ln_pre.exp() * 2.0 * (sign as f64 * phi / 4.0).exp();
    Ok(SeriesResult {
        value: v,
        abs_error_bound: scale * (f.tail * 2.0 + 16.0 * EPS * (1.0 + ln_pre.abs())),
        terms_used: kmax,
    })
}

/// Leading small-ε approximation `√(2π/ε) e^{-π²/(6ε)}` of `(e^{-ε};e^{-ε})_∞`.
pub fn pochhammer_smalleps(eps: f64) -> Result<SeriesResult> {
    if !(eps > 0.0) {
        return domain(format!("ε must be positive, got {eps}"));
    }
    let v = (0.5 * (2.0 * PI / eps).ln() - PI * PI / (6.0 * eps)).exp();
    Ok(SeriesResult {
        value: v,
        // the neglected factor is e^{-ε/24}(1 + O(e^{-4π²/ε}))
        abs_error_bound: v * (eps / 24.0).exp_m1().abs(),
        terms_used: 1,
    })
}
