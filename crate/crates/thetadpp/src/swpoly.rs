//! Stieltjes-Wigert polynomials
//! `p_n(x;q) = (-1)^n q^{n/2+1/4} √(q;q)_n Σ_k q^{k²}(-q^{1/2}x)^k / ((q;q)_k (q;q)_{n-k})`,
//! their log-normal weight, the Plancherel-Rotach expansions at the scaled
//! arguments `q^{-nτ}u`, and the remainder bounds behind them.
//!
//! Polynomials are evaluated from `ln x` in signed log arithmetic, since the
//! individual terms reach `q^{-n²(1-τ)}`.

use std::f64::consts::PI;

use crate::error::{domain, Result};
use crate::numeric::{ceil_guarded, chi, floor_guarded, integrate, signed_log_sum, LogValue};
use crate::qspecial::{ln_q_pochhammer_inf, theta, QParam};

/// Default cap on the polynomial degree.
pub const N_MAX: usize = 200;

/// `τ, n` and the derived integers `m = ⌊(2-τ)n⌋`, `λ = (2-τ)n - m`,
/// `χ(m)` and `⌊m/2⌋`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingParams {
    pub tau: f64,
    pub n: usize,
    pub m: i64,
    pub lambda: f64,
    pub chi_m: i64,
    pub half_m: i64,
}

impl ScalingParams {
    pub fn new(tau: f64, n: usize) -> Result<Self> {
        if !(tau > 0.0 && tau < 2.0) {
            return domain(format!("τ must lie in (0,2), got {tau}"));
        }
        if n == 0 {
            return domain("n must be positive");
        }
        let x = (2.0 - tau) * n as f64;
        let m = floor_guarded(x);
        let lambda = (x - m as f64).max(0.0);
        let lambda = if lambda < 1e-12 * x.max(1.0) { 0.0 } else { lambda };
        let chi_m = chi(m);
        Ok(Self {
            tau,
            n,
            m,
            lambda,
            chi_m,
            half_m: (m - chi_m) / 2,
        })
    }

    /// Exponent of the dropped term in the expansions,
    /// `τn + 2(1-τ)n·1_{[1,2)}(τ)`.
    pub fn order_exponent(&self) -> f64 {
        let n = self.n as f64;
        let ind = if self.tau >= 1.0 { 1.0 } else { 0.0 };
        self.tau * n + 2.0 * (1.0 - self.tau) * n * ind
    }
}

/// The even shift `a = ⌈τn⌉ + χ(⌈τn⌉)` used by the weighted expansion.
pub fn even_shift(tau: f64, n: usize) -> i64 {
    let c = ceil_guarded(tau * n as f64);
    c + chi(c)
}

/// `ln (q;q)_j` for `j = 0..=n`.
pub fn ln_qfactorials(n: usize, qp: QParam) -> Vec<f64> {
    let q = qp.q();
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let mut qk = 1.0;
    out.push(0.0);
    for _ in 0..n {
        qk *= q;
        acc += (-qk).ln_1p();
        out.push(acc);
    }
    out
}

fn check_x(x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("x must be positive and finite, got {x}"));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n > N_MAX {
        return domain(format!("degree {n} exceeds N_max = {N_MAX}"));
    }
    Ok(())
}

/// `ln w(x;q)` given `ln x`.
pub fn sw_log_weight(ln_x: f64, qp: QParam) -> f64 {
    let g = qp.g();
    -ln_x * ln_x / (2.0 * g) - 0.5 * (2.0 * PI * g).ln()
}

/// Log-normal weight `w(x;q) = exp(-(ln x)²/(2g)) / √(2πg)`.
pub fn sw_weight(x: f64, qp: QParam) -> Result<f64> {
    check_x(x)?;
    Ok(sw_log_weight(x.ln(), qp).exp())
}

/// `p_n` (or, with `deriv`, `p_n'`) at `x = e^{ln_x}` in signed log form.
fn poly_log(n: usize, ln_x: f64, qp: QParam, lf: &[f64], deriv: bool) -> LogValue {
    let g = qp.g();
    let start = usize::from(deriv);
    let terms: Vec<LogValue> = (start..=n)
        .map(|k| {
            let kf = k as f64;
            let mut l = -g * (kf * kf + 0.5 * kf) + kf * ln_x - lf[k] - lf[n - k];
            if deriv {
                l += kf.ln() - ln_x;
            }
            LogValue::new(if k % 2 == 0 { 1.0 } else { -1.0 }, l)
        })
        .collect();
    let s = signed_log_sum(&terms);
    let pre = -g * (n as f64 / 2.0 + 0.25) + 0.5 * lf[n];
    let s = s.scale_ln(pre);
    if n % 2 == 1 {
        s.neg()
    } else {
        s
    }
}

/// `p_n(x;q)` in signed log form, from `ln x`.
pub fn sw_poly_log(n: usize, ln_x: f64, qp: QParam) -> Result<LogValue> {
    check_n(n)?;
    let lf = ln_qfactorials(n, qp);
    Ok(poly_log(n, ln_x, qp, &lf, false))
}

/// `p_n'(x;q)` in signed log form, from `ln x`.
pub fn sw_poly_derivative_log(n: usize, ln_x: f64, qp: QParam) -> Result<LogValue> {
    check_n(n)?;
    let lf = ln_qfactorials(n, qp);
    Ok(poly_log(n, ln_x, qp, &lf, true))
}

fn to_finite(v: LogValue, what: &str) -> Result<f64> {
    let x = v.to_f64();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(crate::Error::NonFinite(format!("{what} overflows; use the log form")))
    }
}

/// Orthonormal Stieltjes-Wigert polynomial `p_n(x;q)`.
pub fn sw_poly(n: usize, x: f64, qp: QParam) -> Result<f64> {
    check_x(x)?;
    to_finite(sw_poly_log(n, x.ln(), qp)?, "p_n(x)")
}

/// Analytic derivative `p_n'(x;q)`.
pub fn sw_poly_derivative(n: usize, x: f64, qp: QParam) -> Result<f64> {
    check_x(x)?;
    to_finite(sw_poly_derivative_log(n, x.ln(), qp)?, "p_n'(x)")
}

/// `p_n(q^{-a}u)` and `p_n(q^{-a}u) √w(q^{-a}u)` in signed log form.
pub fn sw_scaled_eval(n: usize, u: f64, a: f64, qp: QParam) -> Result<(LogValue, LogValue)> {
    check_x(u)?;
    if !(a >= 0.0) {
        return domain(format!("scale exponent must be nonnegative, got {a}"));
    }
    let ln_x = u.ln() + a * qp.g();
    let p = sw_poly_log(n, ln_x, qp)?;
    // w(q^{-a}u) = q^{a²/2} u^{-a} w(u)
    let g = qp.g();
    let half_ln_w = 0.5 * (-g * a * a / 2.0 - a * u.ln() + sw_log_weight(u.ln(), qp));
    Ok((p, p.scale_ln(half_ln_w)))
}

/// Variants of the first expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpansionTerms {
    /// Leading theta term plus the indicator correction.
    Full,
    /// Leading theta term only.
    Leading,
}

/// Expansion value with the exponent `e` of its `O(q^e)` remainder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expansion {
    pub value: LogValue,
    /// The same expansion multiplied by `√w(q^{-nτ}u)`.
    pub weighted: LogValue,
    pub order_exponent: f64,
}

fn ind_open(t: f64, lo: f64, hi: f64) -> f64 {
    if t > lo && t < hi {
        1.0
    } else {
        0.0
    }
}

/// Expansion of `p_n(q^{-nτ}u)` for `0 < τ < 2`:
///
/// `(-1)^n q^{n/2+1/4+n²(1-τ)-h(h+χ+λ)} √(q;q)_n / ((-q^{1/2}u)^{h-n}(q;q)²_∞)
///  × [Θ(-q^{λ+χ+1/2}u) + q^h/(1-q) (q^{1/2-(1-τ)n}/u·1_{(0,4/3)}(τ) - q·1_{(2/3,2)}(τ)) Θ(-q^{λ+χ-1/2}u)]`
/// with `h = ⌊m/2⌋`.
pub fn scaled_expansion(sp: &ScalingParams, u: f64, qp: QParam, terms: ExpansionTerms) -> Result<Expansion> {
    check_x(u)?;
    let q = qp.q();
    let g = qp.g();
    let n = sp.n as f64;
    let h = sp.half_m as f64;
    let c = sp.chi_m as f64;
    let lam = sp.lambda;
    let tau = sp.tau;
    let shift = lam + c;
    let mut core = theta(-q.powf(shift + 0.5) * u, q)?.value;
    if terms == ExpansionTerms::Full {
        let corr = q.powf(h) / (1.0 - q)
            * (q.powf(0.5 - (1.0 - tau) * n) / u * ind_open(tau, 0.0, 4.0 / 3.0) - q * ind_open(tau, 2.0 / 3.0, 2.0));
        core += corr * theta(-q.powf(shift - 0.5) * u, q)?.value;
    }
    let core = LogValue::from_f64(core);
    let lf_n = ln_qfactorials(sp.n, qp)[sp.n];
    let ln_qq = ln_q_pochhammer_inf(q, q);
    // unweighted prefactor
    let hn = sp.half_m - sp.n as i64;
    let expo = -g * (n / 2.0 + 0.25 + n * n * (1.0 - tau) - h * (h + c + lam));
    let ln_den = hn as f64 * (0.5 * -g + u.ln()) + 2.0 * ln_qq;
    let sign_den = if hn.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    let sign_n = if sp.n % 2 == 1 { -1.0 } else { 1.0 };
    let pre = LogValue::new(sign_n * sign_den, expo + 0.5 * lf_n - ln_den);
    // weighted prefactor: (-1)^h q^{n+1/4-h/2} √(q;q)_n/(q;q)² √w(q^{λ+χ}u)
    let sign_h = if sp.half_m.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    let ln_w = sw_log_weight(u.ln() - shift * g, qp);
    let wpre = LogValue::new(sign_h, -g * (n + 0.25 - h / 2.0) + 0.5 * lf_n - 2.0 * ln_qq + 0.5 * ln_w);
    Ok(Expansion {
        value: pre.mul(core),
        weighted: wpre.mul(core),
        order_exponent: sp.order_exponent(),
    })
}

/// Expansion of `p_n(q^{-a}u) √w(q^{-a}u)` with `a = ⌈τn⌉ + χ(⌈τn⌉)`:
///
/// `(-1)^{n-a/2} √(q;q)_n/(q;q)²_∞ q^{n/2+1/4+a/4} √w(u)
///  × {Θ(-q^{1/2}u) + q^{n-a/2}/(1-q) (q^{1/2-n+a}/u·1_{(0,4/3)}(τ) - q·1_{(2/3,2)}(τ)) Θ(-q^{-1/2}u)}`.
///
/// The sign is `(-1)^{n-a/2}`; see the crate README for why it differs from
/// a plain `(-1)^n`.
pub fn weighted_expansion(n: usize, u: f64, qp: QParam, tau: f64) -> Result<Expansion> {
    check_x(u)?;
    let sp = ScalingParams::new(tau, n)?;
    let q = qp.q();
    let g = qp.g();
    let a = even_shift(tau, n);
    let af = a as f64;
    let nf = n as f64;
    let corr = q.powf(nf - af / 2.0) / (1.0 - q)
        * (q.powf(0.5 - nf + af) / u * ind_open(tau, 0.0, 4.0 / 3.0) - q * ind_open(tau, 2.0 / 3.0, 2.0));
    let core = theta(-q.sqrt() * u, q)?.value + corr * theta(-u / q.sqrt(), q)?.value;
    let lf_n = ln_qfactorials(n, qp)[n];
    let ln_qq = ln_q_pochhammer_inf(q, q);
    let sign = if (n as i64 - a / 2).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    let ln_pre = 0.5 * lf_n - 2.0 * ln_qq - g * (nf / 2.0 + 0.25 + af / 4.0) + 0.5 * sw_log_weight(u.ln(), qp);
    let weighted = LogValue::new(sign, ln_pre).mul(LogValue::from_f64(core));
    // undo √w(q^{-a}u) = q^{a²/4} u^{-a/2} √w(u)
    let value = weighted.scale_ln(g * af * af / 4.0 + af / 2.0 * u.ln() - 0.5 * sw_log_weight(u.ln(), qp));
    Ok(Expansion {
        value,
        weighted,
        order_exponent: sp.order_exponent(),
    })
}

/// `R(q;n) = (q;q)_∞/(q;q)_n - 1 + q^{n+1}/(1-q)`, summed as
/// `Σ_{k≥2} (-1)^k q^{k(k-1)/2 + k(n+1)} / (q;q)_k` to avoid cancellation.
pub fn remainder_r(qp: QParam, n: usize) -> f64 {
    let q = qp.q();
    let mut acc = crate::numeric::Accumulator::new();
    let qn1 = q.powi(n as i32 + 1);
    // t_k = (-1)^k q^{k(k-1)/2} (q^{n+1})^k / (q;q)_k
    let mut t = -qn1 / (1.0 - q);
    let mut k = 1usize;
    loop {
        let k1 = (k + 1) as i32;
        t *= -q.powi(k1 - 1) * qn1 / (1.0 - q.powi(k1));
        k += 1;
        acc.add(t);
        if t.abs() < 1e-18 * acc.value().abs() || t == 0.0 {
            break;
        }
    }
    acc.value()
}

/// Direct evaluation of `R(q;n)` from its definition (cancels for large n).
pub fn remainder_r_direct(qp: QParam, n: usize) -> f64 {
    let q = qp.q();
    let lf = ln_qfactorials(n, qp);
    let ratio = (ln_q_pochhammer_inf(q, q) - lf[n]).exp();
    ratio - 1.0 + q.powi(n as i32 + 1) / (1.0 - q)
}

/// The bound `|R(q;n)| < (-q;q)_∞ q^{2n+2} / ((1-q)(1-q²))`.
pub fn remainder_r_bound(qp: QParam, n: usize) -> f64 {
    let q = qp.q();
    ln_q_pochhammer_inf(-q, q).exp() * q.powi(2 * n as i32 + 2) / ((1.0 - q) * (1.0 - q * q))
}

/// The older bound `(-q³;q)_∞ q^{n+1}/(1-q)` with exponent `n+1`.
pub fn remainder_r_bound_old(qp: QParam, n: usize) -> f64 {
    let q = qp.q();
    ln_q_pochhammer_inf(-q * q * q, q).exp() * q.powi(n as i32 + 1) / (1.0 - q)
}

fn lattice_sum(q: f64, u: f64, start: i64, shift: i64, sign: f64) -> f64 {
    // Σ_{k≥start} q^{k² - shift·k} u^{sign·k}
    let mut acc = crate::numeric::Accumulator::new();
    let lu = u.ln();
    let lq = q.ln();
    let mut k = start;
    loop {
        let kf = k as f64;
        let t = (lq * (kf * kf - shift as f64 * kf) + sign * kf * lu).exp();
        acc.add(t);
        if kf > shift as f64 && t < 1e-18 * acc.value() {
            break;
        }
        k += 1;
    }
    acc.value()
}

/// `A = (-q;q)²_∞ / ((1-q)²(1-q²)²)`.
fn majorant_a(q: f64) -> f64 {
    (2.0 * ln_q_pochhammer_inf(-q, q)).exp() / ((1.0 - q).powi(2) * (1.0 - q * q).powi(2))
}

/// Explicit majorant `M(n)` of the remainder `|r₁(n) + r₂(n)|`:
///
/// `3q^{(2-τ)²n²/4-1}/(1-q) u^{h+1} s₁ + 6q^{-2} q^o A s₁
///  + 3q^{τ²n²/4-τn-2}/(1-q) u^{-(n-h)} s₂ + 6q^{-2} q^o A s₂`
/// with `s₁ = Σ_{k≥0} q^{k²-2k}u^k`, `s₂ = Σ_{k≥1} q^{k²-4k}u^{-k}`.
pub fn remainder_majorant(sp: &ScalingParams, u: f64, qp: QParam) -> Result<f64> {
    check_x(u)?;
    let q = qp.q();
    let n = sp.n as f64;
    let tau = sp.tau;
    let h = sp.half_m as f64;
    let a = majorant_a(q);
    let s1 = lattice_sum(q, u, 0, 2, 1.0);
    let s2 = lattice_sum(q, u, 1, 4, -1.0);
    let qo = q.powf(sp.order_exponent());
    let t1 = 3.0 * q.powf((2.0 - tau).powi(2) * n * n / 4.0 - 1.0) / (1.0 - q) * u.powf(h + 1.0) * s1;
    let t3 = 3.0 * q.powf(tau * tau * n * n / 4.0 - tau * n - 2.0) / (1.0 - q) * u.powf(-(n - h)) * s2;
    Ok(t1 + t3 + 6.0 / (q * q) * qo * a * (s1 + s2))
}

/// Limit of `M(n) / q^{τn+2(1-τ)n·1_{[1,2)}(τ)}`: `6q^{-2} A (s₁ + s₂)`.
pub fn majorant_limit_constant(u: f64, qp: QParam) -> f64 {
    let q = qp.q();
    6.0 / (q * q) * majorant_a(q) * (lattice_sum(q, u, 0, 2, 1.0) + lattice_sum(q, u, 1, 4, -1.0))
}

/// `r₁(n) + r₂(n)` measured as the exact sum
/// `S_n(q^{-nτ}u) = Σ_k q^{k²}(-x)^k/((q;q)_k(q;q)_{n-k})` divided by its
/// prefactor, minus the three-theta form
/// `Θ(-z) - q^{1+n-h}/(1-q) Θ(-zq) - q^{1+h}/(1-q) Θ(-z/q)`, `z = q^{λ+χ}u`.
pub fn remainder_measured(sp: &ScalingParams, u: f64, qp: QParam) -> Result<f64> {
    check_x(u)?;
    check_n(sp.n)?;
    let q = qp.q();
    let g = qp.g();
    let n = sp.n;
    let nf = n as f64;
    let h = sp.half_m as f64;
    let lf = ln_qfactorials(n, qp);
    let ln_x = u.ln() + sp.tau * nf * g;
    let terms: Vec<LogValue> = (0..=n)
        .map(|k| {
            let kf = k as f64;
            LogValue::new(
                if k % 2 == 0 { 1.0 } else { -1.0 },
                -g * kf * kf + kf * ln_x - lf[k] - lf[n - k],
            )
        })
        .collect();
    let s = signed_log_sum(&terms);
    // P = q^{n²(1-τ) - h(h+χ+λ)} / ((-u)^{h-n} (q;q)²_∞)
    let hn = sp.half_m - n as i64;
    let ln_p = -g * (nf * nf * (1.0 - sp.tau) - h * (h + sp.chi_m as f64 + sp.lambda))
        - hn as f64 * u.ln()
        - 2.0 * ln_q_pochhammer_inf(q, q);
    let sign_p = if hn.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    let ratio = s.div(LogValue::new(sign_p, ln_p)).to_f64();
    let z = q.powf(sp.lambda + sp.chi_m as f64) * u;
    let three = theta(-z, q)?.value
        - q.powf(1.0 + nf - h) / (1.0 - q) * theta(-z * q, q)?.value
        - q.powf(1.0 + h) / (1.0 - q) * theta(-z / q, q)?.value;
    Ok(ratio - three)
}

/// The eighteen explicit remainder families `[r₁₁..r₁₉, r₂₁..r₂₉]`.
pub fn remainder_terms(sp: &ScalingParams, u: f64, qp: QParam) -> Result<[f64; 18]> {
    check_x(u)?;
    let q = qp.q();
    let n = sp.n as i64;
    let h = sp.half_m;
    let z = -q.powf(sp.lambda + sp.chi_m as f64) * u;
    let lq = q.ln();
    // q^{k² + e·k} z^{s·k}
    let term = |k: i64, e: i64, s: i64| -> f64 {
        let kf = k as f64;
        let sign = if (s * k).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        sign * (lq * (kf * kf + e as f64 * kf) + (s * k) as f64 * z.abs().ln()).exp()
    };
    let tail = |from: i64, e: i64, s: i64| -> f64 {
        let mut acc = crate::numeric::Accumulator::new();
        let mut k = from;
        loop {
            let t = term(k, e, s);
            acc.add(t);
            if t.abs() < 1e-20 * acc.abs_sum().max(f64::MIN_POSITIVE) && k > from + 2 {
                break;
            }
            k += 1;
            if k > from + 10_000 {
                break;
            }
        }
        acc.value()
    };
    let fin = |from: i64, to: i64, f: &dyn Fn(i64) -> f64| -> f64 {
        let mut acc = crate::numeric::Accumulator::new();
        for k in from..=to {
            acc.add(f(k));
        }
        acc.value()
    };
    let r = |k: i64| remainder_r(qp, k.max(0) as usize);
    let c_nh = q.powi((1 + n - h) as i32) / (1.0 - q);
    let c_h = q.powi((1 + h) as i32) / (1.0 - q);
    let c_n2 = q.powi((2 + n) as i32) / (1.0 - q).powi(2);
    let m2 = n - h;
    Ok([
        -tail(h + 1, 0, 1),
        c_nh * tail(h + 1, 1, 1),
        c_h * tail(h + 1, -1, 1),
        c_n2 * fin(0, h, &|k| term(k, 0, 1)),
        fin(0, h, &|k| term(k, 0, 1) * r(n - h + k)),
        -c_h * fin(0, h, &|k| term(k, -1, 1) * r(n - h + k)),
        fin(0, h, &|k| term(k, 0, 1) * r(h - k)),
        -c_nh * fin(0, h, &|k| term(k, 1, 1) * r(h - k)),
        fin(0, h, &|k| term(k, 0, 1) * r(h - k) * r(n - h + k)),
        -tail(m2 + 1, 0, -1),
        c_nh * tail(m2 + 1, -1, -1),
        c_h * tail(m2 + 1, 1, -1),
        c_n2 * fin(1, m2, &|k| term(k, 0, -1)),
        fin(1, m2, &|k| term(k, 0, -1) * r(m2 - k)),
        -c_h * fin(1, m2, &|k| term(k, 1, -1) * r(m2 - k)),
        fin(1, m2, &|k| term(k, 0, -1) * r(h + k)),
        -c_nh * fin(1, m2, &|k| term(k, -1, -1) * r(h + k)),
        fin(1, m2, &|k| term(k, 0, -1) * r(h + k) * r(m2 - k)),
    ])
}

/// Gram matrix `G_{nm} = ∫ p_n p_m w dx` for `n, m ≤ nmax`, by adaptive
/// quadrature in `y = ln x` over `[-12σ, (n+m+1)g + 12σ]`, `σ = √g`.
pub fn orthonormality_matrix(nmax: usize, qp: QParam, tol: f64) -> Result<Vec<Vec<f64>>> {
    check_n(nmax)?;
    let g = qp.g();
    let sigma = g.sqrt();
    let lf = ln_qfactorials(nmax, qp);
    let mut out = vec![vec![0.0; nmax + 1]; nmax + 1];
    for i in 0..=nmax {
        for j in i..=nmax {
            let hi = (i + j + 1) as f64 * g + 12.0 * sigma;
            let f = |y: f64| {
                let a = poly_log(i, y, qp, &lf[..=i], false);
                let b = poly_log(j, y, qp, &lf[..=j], false);
                a.mul(b).scale_ln(sw_log_weight(y, qp) + y).to_f64()
            };
            let (v, _) = integrate(f, -12.0 * sigma, hi, tol, 0.0)?;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}
