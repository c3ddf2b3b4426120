//! Correlation kernels: the finite-N Stieltjes-Wigert kernel `K_N` and its
//! mapped form `𝒦_N`, the Jacobi-theta kernel `K^Θ`, the oscillatory limit
//! `𝒦_∞` in several equivalent forms, the sine kernel and mean-field density,
//! plus the convergence studies that compare them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::numeric::{ceil_guarded, chi, signed_log_sum_with_abs, LogValue};
use crate::qspecial::{
    gosper_sin_derivative, gosper_trig, jacobi_theta, jacobi_theta_prime, ln_euler, ln_q_pochhammer_inf,
    smallg_factor, smallg_ln_prefactor, theta_log, theta_prime_log, GosperKind, JacobiKind, QParam,
};
use crate::swpoly::{
    even_shift, scaled_expansion, sw_log_weight, sw_poly_derivative_log, sw_poly_log, ExpansionTerms,
    ScalingParams,
};

const EPS: f64 = f64::EPSILON;
/// Relative distance below which the analytic diagonal formula is used.
pub const DIAGONAL_SWITCH: f64 = 1e-6;
/// Below this coupling `𝒦_∞` is evaluated through the small-coupling form.
pub const SMALL_G: f64 = 0.15;
/// Correction terms kept in the small-coupling form.
pub const SMALL_G_KMAX: usize = 8;

/// Which formula produced a kernel value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelForm {
    SumForm,
    ChristoffelDarboux,
    DiagonalAnalytic,
    ThetaSeries,
    Theta4Form,
    Theta2Form,
    GosperForm,
    SmallCoupling,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelEval {
    pub value: f64,
    pub abs_error: f64,
    pub form: KernelForm,
    pub truncation_order: usize,
}

/// Requested evaluation route for [`kernel_finite`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FiniteForm {
    /// Christoffel-Darboux off the diagonal, analytic diagonal on it.
    Auto,
    /// `Σ_{n<N} p_n(x) p_n(y) √(w(x)w(y))`.
    Sum,
}

/// Requested form of `𝒦_∞`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InftyForm {
    /// Theta series, switching to the small-coupling form for `g < 0.15`.
    Auto,
    ThetaSeries,
    Theta4Form,
    Theta2Form,
    GosperForm,
    SmallCoupling,
}

fn is_diagonal(a: f64, b: f64) -> bool {
    (a - b).abs() < DIAGONAL_SWITCH
}

/// `ln|e^a - e^b|`.
fn ln_abs_exp_diff(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (-(lo - hi).exp_m1()).ln()
}

fn sign_of(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn finish(v: LogValue, rel_err: f64, form: KernelForm, order: usize) -> Result<KernelEval> {
    let value = v.to_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("kernel value overflows ({v:?})")));
    }
    Ok(KernelEval {
        value,
        abs_error: rel_err * value.abs(),
        form,
        truncation_order: order,
    })
}

/// `K_N` from logarithmic arguments, times `e^{extra}`.
fn finite_ln(n: usize, lx: f64, ly: f64, qp: QParam, form: FiniteForm, extra: f64) -> Result<KernelEval> {
    if n == 0 {
        return domain("N must be at least 1");
    }
    let g = qp.g();
    let half_w = 0.5 * (sw_log_weight(lx, qp) + sw_log_weight(ly, qp));
    if form == FiniteForm::Sum {
        let terms: Vec<LogValue> = (0..n)
            .map(|k| Ok(sw_poly_log(k, lx, qp)?.mul(sw_poly_log(k, ly, qp)?)))
            .collect::<Result<_>>()?;
        let (s, ln_abs) = signed_log_sum_with_abs(&terms);
        let rel = 8.0 * EPS * (n as f64 + 1.0) * (ln_abs - s.log_abs).exp();
        return finish(s.scale_ln(half_w + extra), rel, KernelForm::SumForm, n);
    }
    // √(1 - q^N) / q^{2N}
    let ln_pre = 0.5 * (-(-g * n as f64).exp()).ln_1p() + 2.0 * g * n as f64;
    if is_diagonal(lx, ly) {
        let mid = 0.5 * (lx + ly);
        let pn = sw_poly_log(n, mid, qp)?;
        let pm = sw_poly_log(n - 1, mid, qp)?;
        let dn = sw_poly_derivative_log(n, mid, qp)?;
        let dm = sw_poly_derivative_log(n - 1, mid, qp)?;
        let (s, ln_abs) = signed_log_sum_with_abs(&[dn.mul(pm), pn.mul(dm).neg()]);
        let rel = 16.0 * EPS * (n as f64 + 1.0) * (ln_abs - s.log_abs).exp();
        let v = s.scale_ln(ln_pre + sw_log_weight(mid, qp) + extra);
        return finish(v, rel, KernelForm::DiagonalAnalytic, n);
    }
    let pn_x = sw_poly_log(n, lx, qp)?;
    let pm_x = sw_poly_log(n - 1, lx, qp)?;
    let pn_y = sw_poly_log(n, ly, qp)?;
    let pm_y = sw_poly_log(n - 1, ly, qp)?;
    let (num, ln_abs) = signed_log_sum_with_abs(&[pn_x.mul(pm_y), pn_y.mul(pm_x).neg()]);
    let den = LogValue::new(sign_of(lx - ly), ln_abs_exp_diff(lx, ly));
    let rel = 16.0 * EPS * (n as f64 + 1.0) * (ln_abs - num.log_abs).exp();
    let v = num.div(den).scale_ln(ln_pre + half_w + extra);
    finish(v, rel, KernelForm::ChristoffelDarboux, n)
}

/// Finite-N kernel `K_N(x, y)` in the native variables `x, y > 0`.
pub fn kernel_finite(n: usize, x: f64, y: f64, qp: QParam, form: FiniteForm) -> Result<KernelEval> {
    if !(x > 0.0 && y > 0.0) {
        return domain(format!("kernel arguments must be positive, got ({x}, {y})"));
    }
    finite_ln(n, x.ln(), y.ln(), qp, form, 0.0)
}

/// Mapped kernel `𝒦_N(φ,ψ) = e^{(φ+ψ)/2+Ng} K_N(e^{φ+Ng}, e^{ψ+Ng})`,
/// evaluated entirely from logarithms.
pub fn kernel_finite_mapped(n: usize, phi: f64, psi: f64, qp: QParam, form: FiniteForm) -> Result<KernelEval> {
    let s = n as f64 * qp.g();
    finite_ln(n, phi + s, psi + s, qp, form, 0.5 * (phi + psi) + s)
}

/// Scaled kernel `q^{-a} K_N(q^{-a}u, q^{-a}v)` with `a = ⌈τN⌉ + χ(⌈τN⌉)`.
pub fn kernel_finite_scaled(n: usize, u: f64, v: f64, qp: QParam, tau: f64) -> Result<KernelEval> {
    if !(u > 0.0 && v > 0.0) {
        return domain("scaled kernel arguments must be positive");
    }
    let a = even_shift(tau, n) as f64 * qp.g();
    finite_ln(n, u.ln() + a, v.ln() + a, qp, FiniteForm::Auto, a)
}

fn theta_lv(z: f64, q: f64) -> Result<(LogValue, f64)> {
    let (v, le) = theta_log(z, q)?;
    Ok((v, (le - v.log_abs).exp()))
}

fn theta_prime_lv(z: f64, q: f64) -> Result<(LogValue, f64)> {
    let (v, le) = theta_prime_log(z, q)?;
    Ok((v, (le - v.log_abs).exp()))
}

/// `Θ(-e^s | q)` from the exponent `s`.
fn theta_neg_exp(s: f64, q: f64) -> Result<(LogValue, f64)> {
    let z = s.exp();
    if !z.is_finite() || z == 0.0 {
        return domain(format!("e^{s} is outside the binary64 range"));
    }
    theta_lv(-z, q)
}

fn theta_prime_neg_exp(s: f64, q: f64) -> Result<(LogValue, f64)> {
    let z = s.exp();
    if !z.is_finite() || z == 0.0 {
        return domain(format!("e^{s} is outside the binary64 range"));
    }
    theta_prime_lv(-z, q)
}

/// `ln (q;q)_∞` for `q = e^{-g}`.
fn ln_qq(qp: QParam) -> f64 {
    ln_euler(qp.g())
}

/// Bilinear antisymmetric combination `ab - cd` with relative error.
fn cross(a: (LogValue, f64), b: (LogValue, f64), c: (LogValue, f64), d: (LogValue, f64)) -> (LogValue, f64) {
    let t1 = a.0.mul(b.0);
    let t2 = c.0.mul(d.0);
    let (s, ln_abs) = signed_log_sum_with_abs(&[t1, t2.neg()]);
    let e1 = (t1.log_abs - s.log_abs).exp() * (a.1 + b.1);
    let e2 = (t2.log_abs - s.log_abs).exp() * (c.1 + d.1);
    (s, e1 + e2 + 4.0 * EPS * (ln_abs - s.log_abs).exp())
}

/// Jacobi-theta kernel
/// `K^Θ(u,v) = [Θ(-q^{1/2}u)Θ(-q^{-1/2}v) - Θ(-q^{1/2}v)Θ(-q^{-1/2}u)] / (u-v) · √(w(u)w(v)) / (q;q)³_∞`.
pub fn kernel_theta(u: f64, v: f64, qp: QParam) -> Result<KernelEval> {
    if !(u > 0.0 && v > 0.0) {
        return domain(format!("kernel arguments must be positive, got ({u}, {v})"));
    }
    let q = qp.q();
    let hq = -0.5 * qp.g();
    let (lu, lv) = (u.ln(), v.ln());
    let ln_norm = -3.0 * ln_qq(qp);
    if is_diagonal(lu, lv) {
        let lm = 0.5 * (lu + lv);
        let (a, b) = (lm + hq, lm - hq);
        let ta = theta_neg_exp(a, q)?;
        let tb = theta_neg_exp(b, q)?;
        let da = theta_prime_neg_exp(a, q)?;
        let db = theta_prime_neg_exp(b, q)?;
        // q^{-1/2} Θ(a)Θ'(b) - q^{1/2} Θ'(a)Θ(b)
        let (s, rel) = cross(
            (ta.0.scale_ln(-hq), ta.1),
            db,
            (da.0.scale_ln(hq), da.1),
            tb,
        );
        let val = s.scale_ln(ln_norm + sw_log_weight(lm, qp));
        return finish(val, rel, KernelForm::DiagonalAnalytic, 0);
    }
    let (s, rel) = cross(
        theta_neg_exp(lu + hq, q)?,
        theta_neg_exp(lv - hq, q)?,
        theta_neg_exp(lv + hq, q)?,
        theta_neg_exp(lu - hq, q)?,
    );
    let den = LogValue::new(sign_of(lu - lv), ln_abs_exp_diff(lu, lv));
    let half_w = 0.5 * (sw_log_weight(lu, qp) + sw_log_weight(lv, qp));
    finish(s.div(den).scale_ln(ln_norm + half_w), rel, KernelForm::ThetaSeries, 0)
}

/// `2 sinh(d/2)` in signed log form.
fn two_sinh_half(d: f64) -> LogValue {
    LogValue::new(sign_of(d), ln_abs_exp_diff(0.5 * d, -0.5 * d))
}

fn infty_series(phi: f64, psi: f64, qp: QParam, form: KernelForm) -> Result<KernelEval> {
    let q = qp.q();
    let g = qp.g();
    let ln_norm = -0.5 * (2.0 * PI * g).ln() - 3.0 * ln_qq(qp);
    if is_diagonal(phi, psi) {
        let p = 0.5 * (phi + psi);
        let ta = theta_neg_exp(p - g / 2.0, q)?;
        let tb = theta_neg_exp(p + g / 2.0, q)?;
        let da = theta_prime_neg_exp(p - g / 2.0, q)?;
        let db = theta_prime_neg_exp(p + g / 2.0, q)?;
        let (s, rel) = cross((ta.0.scale_ln(g), ta.1), db, da, tb);
        let val = s.scale_ln(ln_norm - (p - g) * (p - g) / (2.0 * g));
        return finish(val, rel, KernelForm::DiagonalAnalytic, 0);
    }
    let (s, rel) = cross(
        theta_neg_exp(phi - g / 2.0, q)?,
        theta_neg_exp(psi + g / 2.0, q)?,
        theta_neg_exp(psi - g / 2.0, q)?,
        theta_neg_exp(phi + g / 2.0, q)?,
    );
    let val = s.div(two_sinh_half(phi - psi)).scale_ln(ln_norm - (phi * phi + psi * psi) / (4.0 * g));
    finish(val, rel, form, 0)
}

fn infty_theta4(phi: f64, psi: f64, qp: QParam) -> Result<KernelEval> {
    let g = qp.g();
    if is_diagonal(phi, psi) {
        // the diagonal of the ϑ₄ form is the theta-series diagonal
        return infty_series(phi, psi, qp, KernelForm::DiagonalAnalytic);
    }
    let omega = Complex64::new(0.0, g / PI);
    let t4 = |s: f64| -> Result<(LogValue, f64)> {
        let r = jacobi_theta(JacobiKind::Four, Complex64::new(0.0, -0.5 * s), omega)?;
        Ok((LogValue::from_f64(r.value.re), r.abs_error_bound / r.value.re.abs()))
    };
    let (s, rel) = cross(t4(phi - g / 2.0)?, t4(psi + g / 2.0)?, t4(psi - g / 2.0)?, t4(phi + g / 2.0)?);
    let ln_norm = -0.5 * (2.0 * PI * g).ln() - 3.0 * ln_qq(qp);
    let val = s.div(two_sinh_half(phi - psi)).scale_ln(ln_norm - (phi * phi + psi * psi) / (4.0 * g));
    finish(val, rel, KernelForm::Theta4Form, 0)
}

fn infty_theta2(phi: f64, psi: f64, qp: QParam) -> Result<KernelEval> {
    let g = qp.g();
    let omega = Complex64::new(0.0, PI / g);
    let arg = |p: f64, s: f64| Complex64::new(PI * p / (2.0 * g) + s * PI / 4.0, 0.0);
    let t2 = |p: f64, s: f64| -> Result<f64> { Ok(jacobi_theta(JacobiKind::Two, arg(p, s), omega)?.value.re) };
    let ln_norm = -g.ln() + 0.5 * (PI / (2.0 * g)).ln() + g / 8.0 - 3.0 * ln_qq(qp);
    if is_diagonal(phi, psi) {
        let p = 0.5 * (phi + psi);
        let (a, b) = (t2(p, -1.0)?, t2(p, 1.0)?);
        let da = jacobi_theta_prime(JacobiKind::Two, arg(p, -1.0), omega)?.value.re * PI / (2.0 * g);
        let db = jacobi_theta_prime(JacobiKind::Two, arg(p, 1.0), omega)?.value.re * PI / (2.0 * g);
        let parts = [da * b, -a * db, -0.5 * a * b];
        let s: f64 = parts.iter().sum();
        let scale: f64 = parts.iter().map(|x| x.abs()).sum();
        let val = LogValue::from_f64(s).scale_ln(ln_norm);
        return finish(val, 16.0 * EPS * scale / s.abs(), KernelForm::Theta2Form, 0);
    }
    let d = phi - psi;
    let t1 = (-d / 4.0).exp() * t2(phi, -1.0)? * t2(psi, 1.0)?;
    let t3 = (d / 4.0).exp() * t2(psi, -1.0)? * t2(phi, 1.0)?;
    let s = t1 - t3;
    let rel = 16.0 * EPS * (t1.abs() + t3.abs()) / s.abs();
    let val = LogValue::from_f64(s).div(two_sinh_half(d)).scale_ln(ln_norm);
    finish(val, rel, KernelForm::Theta2Form, 0)
}

fn infty_gosper(phi: f64, psi: f64, qp: QParam) -> Result<KernelEval> {
    let g = qp.g();
    let q = qp.q();
    let z = |p: f64| p / (2.0 * g) + 0.25;
    let sq = |p: f64| -> Result<f64> { Ok(gosper_trig(GosperKind::Sin, Complex64::new(z(p), 0.0), q)?.value.re) };
    let cq = |p: f64| -> Result<f64> { Ok(gosper_trig(GosperKind::Cos, Complex64::new(z(p), 0.0), q)?.value.re) };
    // (q;q²)_∞ / (q²;q²)_∞
    let ln_norm = g / 8.0 - 0.5 * (2.0 * PI * g).ln() + ln_q_pochhammer_inf(q, q * q) - ln_euler(2.0 * g);
    if is_diagonal(phi, psi) {
        let p = 0.5 * (phi + psi);
        let (s, c) = (sq(p)?, cq(p)?);
        let ds = gosper_sin_derivative(z(p), q)? / (2.0 * g);
        let dc = gosper_sin_derivative(z(p) + 0.5, q)? / (2.0 * g);
        let parts = [ds * c, -s * dc, -0.5 * s * c];
        let v: f64 = parts.iter().sum();
        let scale: f64 = parts.iter().map(|x| x.abs()).sum();
        let val = LogValue::from_f64(v).scale_ln(ln_norm);
        return finish(val, 64.0 * EPS * scale / v.abs(), KernelForm::GosperForm, 0);
    }
    let d = phi - psi;
    let t1 = (-d / 4.0).exp() * sq(phi)? * cq(psi)?;
    let t3 = (d / 4.0).exp() * sq(psi)? * cq(phi)?;
    let s = t1 - t3;
    let rel = 64.0 * EPS * (t1.abs() + t3.abs()) / s.abs();
    let val = LogValue::from_f64(s).div(two_sinh_half(d)).scale_ln(ln_norm);
    finish(val, rel, KernelForm::GosperForm, 0)
}

fn infty_smallg(phi: f64, psi: f64, qp: QParam) -> Result<KernelEval> {
    let g = qp.g();
    let k = SMALL_G_KMAX;
    // C² / (√(2πg) (q;q)³)
    let ln_c = 2.0 * smallg_ln_prefactor(g) - 0.5 * (2.0 * PI * g).ln() - 3.0 * ln_qq(qp);
    if is_diagonal(phi, psi) {
        let p = 0.5 * (phi + psi);
        let m = smallg_factor(p, -1.0, g, k);
        let pl = smallg_factor(p, 1.0, g, k);
        let parts = [m.dt * pl.t, -m.t * pl.dt];
        let v: f64 = parts.iter().sum();
        let scale: f64 = parts.iter().map(|x| x.abs()).sum();
        let rel = 16.0 * EPS * scale / v.abs() + 4.0 * (m.tail + pl.tail);
        return finish(LogValue::from_f64(v).scale_ln(ln_c), rel, KernelForm::SmallCoupling, k);
    }
    let (mp, pp) = (smallg_factor(phi, -1.0, g, k), smallg_factor(phi, 1.0, g, k));
    let (ms, ps) = (smallg_factor(psi, -1.0, g, k), smallg_factor(psi, 1.0, g, k));
    let t1 = mp.t * ps.t;
    let t2 = ms.t * pp.t;
    let v = t1 - t2;
    let rel = 16.0 * EPS * (t1.abs() + t2.abs()) / v.abs() + 4.0 * (mp.tail + ps.tail);
    let val = LogValue::from_f64(v).div(two_sinh_half(phi - psi)).scale_ln(ln_c);
    finish(val, rel, KernelForm::SmallCoupling, k)
}

/// Oscillatory limit kernel
/// `𝒦_∞(φ,ψ) = e^{-(φ²+ψ²)/4g} / (√(2πg)(q;q)³_∞)
///   · [Θ(-e^{φ-g/2})Θ(-e^{ψ+g/2}) - Θ(-e^{ψ-g/2})Θ(-e^{φ+g/2})] / (2 sinh((φ-ψ)/2))`
/// in the requested equivalent form.
pub fn kernel_infty(phi: f64, psi: f64, qp: QParam, form: InftyForm) -> Result<KernelEval> {
    if !(phi.is_finite() && psi.is_finite()) {
        return domain("kernel arguments must be finite");
    }
    match form {
        InftyForm::Auto if qp.g() < SMALL_G => infty_smallg(phi, psi, qp),
        InftyForm::Auto | InftyForm::ThetaSeries => infty_series(phi, psi, qp, KernelForm::ThetaSeries),
        InftyForm::Theta4Form => infty_theta4(phi, psi, qp),
        InftyForm::Theta2Form => infty_theta2(phi, psi, qp),
        InftyForm::GosperForm => infty_gosper(phi, psi, qp),
        InftyForm::SmallCoupling => infty_smallg(phi, psi, qp),
    }
}

/// One-point density `ρ̃(φ) = 𝒦_∞(φ,φ)`, period `2g`.
pub fn density_profile(phi: f64, qp: QParam) -> Result<f64> {
    Ok(kernel_infty(phi, phi, qp, InftyForm::Auto)?.value)
}

/// Mean-field density
/// `(1/πg) arctan(√(e^{Ng} - cosh²(φ/2)) / cosh(φ/2))`, zero off the support.
pub fn density_meanfield(n: usize, phi: f64, g: f64) -> Result<f64> {
    if !(g > 0.0) {
        return domain(format!("g_s must be positive, got {g}"));
    }
    if n == 0 {
        return domain("N must be positive");
    }
    let x = 0.5 * phi.abs();
    let ln_cosh = x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2;
    // e^{Ng}/cosh² - 1
    let r = (n as f64 * g - 2.0 * ln_cosh).exp_m1();
    if r <= 0.0 {
        return Ok(0.0);
    }
    Ok(r.sqrt().atan() / (PI * g))
}

/// Sine kernel `sin(π(φ-ψ))/(π(φ-ψ))`.
pub fn kernel_sine(phi: f64, psi: f64) -> f64 {
    let d = PI * (phi - psi);
    if (phi - psi).abs() < DIAGONAL_SWITCH * 1f64.max(phi.abs()).max(psi.abs()) {
        1.0 - d * d / 6.0
    } else {
        d.sin() / d
    }
}

/// Admissible sizes `N` for a given `τ` and parity of `⌈τN⌉`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsequenceSpec {
    pub tau: f64,
    pub parity: i64,
    pub members: Vec<usize>,
}

/// `⌈τ(N-1)⌉ = ⌈τN⌉ + ⌈-τ⌉`.
pub fn admissible(tau: f64, n: usize) -> bool {
    let nf = n as f64;
    ceil_guarded(tau * (nf - 1.0)) == ceil_guarded(tau * nf) + ceil_guarded(-tau)
}

/// Default scan cap for [`subsequence`].
pub const SUBSEQUENCE_SCAN_CAP: usize = 1_000_000;

/// The first `count` admissible `N ≥ n_start` with `⌈τN⌉ ≡ parity (mod 2)`.
pub fn subsequence(tau: f64, parity: i64, count: usize, n_start: usize) -> Result<SubsequenceSpec> {
    if !(tau > 2.0 / 3.0 && tau < 2.0) {
        return domain(format!("τ must lie in (2/3, 2), got {tau}"));
    }
    if parity != 0 && parity != 1 {
        return domain("parity must be 0 or 1");
    }
    let mut members = Vec::with_capacity(count);
    let mut n = n_start.max(1);
    while members.len() < count {
        if n > SUBSEQUENCE_SCAN_CAP {
            return Err(Error::Exhausted {
                found: members.len(),
                wanted: count,
                cap: SUBSEQUENCE_SCAN_CAP,
            });
        }
        if admissible(tau, n) && chi(ceil_guarded(tau * n as f64)) == parity {
            members.push(n);
        }
        n += 1;
    }
    Ok(SubsequenceSpec { tau, parity, members })
}

/// What a convergence study compares against `K^Θ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudySubject {
    /// The exact scaled kernel `q^{-a}K_N(q^{-a}u, q^{-a}v)`.
    Exact,
    /// The Christoffel-Darboux quotient built from the first expansion of
    /// `p_N` and `p_{N-1}`, with or without the indicator correction.
    Expansion(ExpansionTerms),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub shift: i64,
    pub sup_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln(error)` against `N`.
    pub slope: f64,
    /// `slope < 0` and the last error is at most half the first.
    pub converging: bool,
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Default witness set `{0.5, 1, 2}²`.
pub fn default_test_points() -> Vec<(f64, f64)> {
    let s = [0.5, 1.0, 2.0];
    s.iter().flat_map(|&u| s.iter().map(move |&v| (u, v))).collect()
}

/// Kernel assembled from expansions of `p_N √w` and `p_{N-1} √w` at
/// `q^{-a}u`, `a` the even shift for `N`.
pub fn expansion_kernel(n: usize, u: f64, v: f64, qp: QParam, tau: f64, terms: ExpansionTerms) -> Result<f64> {
    if n < 2 {
        return domain("expansion kernel needs N ≥ 2");
    }
    let a = even_shift(tau, n) as f64;
    let g = qp.g();
    let weighted = |deg: usize, x: f64| -> Result<LogValue> {
        let sp = ScalingParams::new(a / deg as f64, deg)?;
        Ok(scaled_expansion(&sp, x, qp, terms)?.weighted)
    };
    let ln_pre = 0.5 * (-(-g * n as f64).exp()).ln_1p() + 2.0 * g * n as f64;
    let num = weighted(n, u)?.mul(weighted(n - 1, v)?).sub(weighted(n, v)?.mul(weighted(n - 1, u)?));
    Ok(num.div(LogValue::from_f64(u - v)).scale_ln(ln_pre).to_f64())
}

/// Relative sup-error of the chosen subject against `K^Θ` over `points`, for
/// each `N` in `n_list`.
pub fn convergence_study(
    tau: f64,
    qp: QParam,
    points: &[(f64, f64)],
    n_list: &[usize],
    subject: StudySubject,
) -> Result<ConvergenceTable> {
    if points.iter().any(|&(u, v)| !(u > 0.0 && v > 0.0)) {
        return domain("test points must be positive");
    }
    let refs: Vec<f64> = points
        .iter()
        .map(|&(u, v)| Ok(kernel_theta(u, v, qp)?.value))
        .collect::<Result<_>>()?;
    let rows: Vec<ConvergenceRow> = n_list
        .par_iter()
        .map(|&n| {
            let mut worst: f64 = 0.0;
            for (&(u, v), &r) in points.iter().zip(&refs) {
                let k = match subject {
                    StudySubject::Exact => kernel_finite_scaled(n, u, v, qp, tau)?.value,
                    StudySubject::Expansion(t) => {
                        if is_diagonal(u.ln(), v.ln()) {
                            continue;
                        }
                        expansion_kernel(n, u, v, qp, tau, t)?
                    }
                };
                worst = worst.max((k / r - 1.0).abs());
            }
            Ok(ConvergenceRow {
                n,
                shift: even_shift(tau, n),
                sup_rel_error: worst,
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sup_rel_error.ln()).collect();
    let slope = if rows.len() >= 2 { ls_slope(&xs, &ys) } else { f64::NAN };
    let converging = rows.len() >= 2
        && slope < 0.0
        && rows.last().unwrap().sup_rel_error <= 0.5 * rows[0].sup_rel_error;
    Ok(ConvergenceTable { rows, slope, converging })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SineLimitRow {
    pub g: f64,
    pub sup_abs_error: f64,
    pub form: KernelForm,
}

/// `sup |2g 𝒦_∞(2gφ, 2gψ) - K_sin(φ,ψ)|` over the grid `points × points`
/// for each coupling.
pub fn sine_limit_study(gs: &[f64], points: &[f64]) -> Result<Vec<SineLimitRow>> {
    gs.par_iter()
        .map(|&g| {
            let qp = QParam::from_g(g)?;
            let mut worst: f64 = 0.0;
            let mut form = KernelForm::ThetaSeries;
            for &a in points {
                for &b in points {
                    let k = kernel_infty(2.0 * g * a, 2.0 * g * b, qp, InftyForm::Auto)?;
                    form = k.form;
                    worst = worst.max((2.0 * g * k.value - kernel_sine(a, b)).abs());
                }
            }
            Ok(SineLimitRow {
                g,
                sup_abs_error: worst,
                form,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_kernel_values() {
        assert_eq!(kernel_sine(0.3, 0.3), 1.0);
        assert!((kernel_sine(0.5, 0.0) - 2.0 / PI).abs() < 1e-15);
        assert_eq!(kernel_sine(1.5, 1.0), kernel_sine(0.5, 0.0));
    }

    #[test]
    fn meanfield_values() {
        let v = density_meanfield(10, 0.0, 1.0).unwrap();
        assert!((v - (10f64.exp() - 1.0).sqrt().atan() / PI).abs() < 1e-15);
        // mpmath: 0.4978552286286549
        assert!((v - 0.497_855_228_628_654_99).abs() < 1e-14);
        assert_eq!(density_meanfield(2, 10.0, 1.0).unwrap(), 0.0);
        let edge = 2.0 * (1f64.exp()).sqrt().acosh();
        assert!(density_meanfield(1, edge - 1e-9, 1.0).unwrap() < 1e-3);
        assert!((density_meanfield(400, 0.3, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn subsequence_examples() {
        let s = subsequence(1.0, 0, 4, 1).unwrap();
        assert_eq!(s.members, vec![2, 4, 6, 8]);
        let s = subsequence(1.0, 1, 4, 2).unwrap();
        assert_eq!(s.members, vec![3, 5, 7, 9]);
        assert!(admissible(0.75, 4));
        assert!(!admissible(0.75, 5));
        assert_eq!(ceil_guarded(-0.9), 0);
        assert_eq!(ceil_guarded(-1.5), -1);
        assert!(subsequence(0.5, 0, 1, 1).is_err());
    }

    #[test]
    fn k1_closed_form() {
        let qp = QParam::from_q(0.5).unwrap();
        for &(x, y) in &[(0.3, 2.0), (1.1, 1.1), (5.0, 0.2)] {
            let k = kernel_finite(1, x, y, qp, FiniteForm::Auto).unwrap().value;
            let want = 0.5f64.sqrt() * (sw_log_weight(x.ln(), qp) / 2.0 + sw_log_weight(y.ln(), qp) / 2.0).exp();
            assert!((k / want - 1.0).abs() < 1e-13, "{x} {y}");
        }
    }
}
