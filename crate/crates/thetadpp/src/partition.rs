//! Chern-Simons partition function on S³ for U(N), in closed form, as a
//! q-Pochhammer product with free complex coupling, and by direct
//! integration for N ≤ 3.

use crate::error::{domain, Error, Result};
use crate::numeric::{integrate, LogComplex, LogValue};
use crate::qspecial::QParam;
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionRoute {
    ClosedFormPhysical,
    ProductForm,
    DirectIntegral,
}

impl PartitionRoute {
    pub fn name(self) -> &'static str {
        match self {
            PartitionRoute::ClosedFormPhysical => "closed-form-physical",
            PartitionRoute::ProductForm => "product-form",
            PartitionRoute::DirectIntegral => "direct-integral",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionResult {
    /// Log-magnitude and phase; `value` is this converted, and may
    /// underflow where `log` does not.
    pub log: LogComplex,
    pub value: Complex64,
    pub route: PartitionRoute,
    pub estimated_error: f64,
}

impl PartitionResult {
    fn from_log(log: LogComplex, route: PartitionRoute, rel_err: f64) -> Self {
        let value = log.to_complex();
        Self {
            log,
            value,
            route,
            estimated_error: rel_err * value.norm(),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return domain(format!("N must be at least 2, got {n}"));
    }
    Ok(())
}

/// `e^{iπN²/4}(k+N)^{-N/2} ∏_{j<N}(2 sin(πj/(k+N)))^{N-j}`.
pub fn partition_physical(k: usize, n: usize) -> Result<PartitionResult> {
    if k < 1 {
        return domain("k must be positive");
    }
    check_n(n)?;
    let kn = (k + n) as f64;
    let mut ln = -(n as f64) / 2.0 * kn.ln();
    for j in 1..n {
        ln += (n - j) as f64 * (2.0 * (PI * j as f64 / kn).sin()).ln();
    }
    // reduce N²/4 mod 2 before multiplying by π
    let frac = ((n * n) % 8) as f64 / 4.0;
    let log = LogComplex {
        log_abs: ln,
        phase: Complex64::from_polar(1.0, PI * frac),
    };
    Ok(PartitionResult::from_log(log, PartitionRoute::ClosedFormPhysical, 4.0 * n as f64 * f64::EPSILON))
}

/// `(g/2π)^{N/2} e^{gN(N²-1)/12} ∏_{j<N}(e^{-g};e^{-g})_j` for complex `g`
/// with `Re g ≥ 0`, principal branch for the power.
pub fn partition_product(g: Complex64, n: usize) -> Result<PartitionResult> {
    check_n(n)?;
    if !(g.re >= 0.0) || g.norm() == 0.0 || !g.is_finite() {
        return domain(format!("coupling must satisfy Re g_s >= 0, g_s != 0; got {g}"));
    }
    let nf = n as f64;
    let mut log = LogComplex::exp((g / (2.0 * PI)).ln() * (nf / 2.0) + g * (nf * (nf * nf - 1.0) / 12.0));
    let q = (-g).exp();
    let one = Complex64::new(1.0, 0.0);
    // ∏_{j=1}^{N-1} (q;q)_j = ∏_{i=1}^{N-1} (1 - q^i)^{N-i}
    let mut qi = one;
    for i in 1..n {
        qi *= q;
        let f = LogComplex::from_complex(one - qi);
        if f.log_abs == f64::NEG_INFINITY {
            return Err(Error::Pole(format!("q^{i} = 1")));
        }
        let lf = LogComplex {
            log_abs: f.log_abs * (n - i) as f64,
            phase: f.phase.powu((n - i) as u32),
        };
        log = log.mul(lf);
    }
    Ok(PartitionResult::from_log(log, PartitionRoute::ProductForm, 8.0 * (n * n) as f64 * f64::EPSILON))
}

/// Right-hand side of the sine-product identity,
/// `e^{-gN(N²-1)/12} e^{iπN(N-1)/4} ∏_{j<N}(2 sin(jg/2i))^{N-j}`.
pub fn sine_product_identity_rhs(g: Complex64, n: usize) -> Complex64 {
    let nf = n as f64;
    let i = Complex64::new(0.0, 1.0);
    let mut v = (-g * (nf * (nf * nf - 1.0) / 12.0) + i * (PI * nf * (nf - 1.0) / 4.0)).exp();
    for j in 1..n {
        v *= (2.0 * (g * j as f64 / (2.0 * i)).sin()).powu((n - j) as u32);
    }
    v
}

/// `∏_{j<N} (e^{-g};e^{-g})_j` for complex `g`.
pub fn pochhammer_product(g: Complex64, n: usize) -> Complex64 {
    let q = (-g).exp();
    let one = Complex64::new(1.0, 0.0);
    let mut v = one;
    let mut qi = one;
    for i in 1..n {
        qi *= q;
        v *= (one - qi).powu((n - i) as u32);
    }
    v
}

const INTEGRAL_EPS: f64 = 1e-16;

fn integral_cutoff(g: f64, n: usize) -> f64 {
    (2.0 * g).sqrt() * ((2.0 * (1.0 / INTEGRAL_EPS).ln()).sqrt() + n as f64 * g.sqrt())
}

fn vandermonde_sinh(phis: &[f64]) -> f64 {
    let mut v = 1.0;
    for j in 0..phis.len() {
        for k in j + 1..phis.len() {
            let s = 2.0 * (0.5 * (phis[k] - phis[j])).sinh();
            v *= s * s;
        }
    }
    v
}

/// Direct quadrature of the N-fold integral (N = 2 or 3) with real `g`.
///
/// `ordered` integrates over `φ_1 < … < φ_N` only and multiplies by `N!`.
pub fn partition_integral_with(qp: QParam, n: usize, ordered: bool) -> Result<PartitionResult> {
    if !(n == 2 || n == 3) {
        return domain(format!("direct integration supports N = 2 or 3, got {n}"));
    }
    let g = qp.g();
    let l = integral_cutoff(g, n);
    let nf = n as f64;
    let gauss = |p: f64| (-p * p / (2.0 * g)).exp() / (2.0 * PI);
    let tol = 1e-13;
    let mut inner_err = 0.0f64;
    let (raw, err) = if n == 2 {
        integrate(
            |a| {
                let lo = if ordered { a } else { -l };
                let (v, e) = integrate(|b| gauss(b) * vandermonde_sinh(&[a, b]), lo, l, tol, 1e-12)
                    .unwrap_or((f64::NAN, f64::NAN));
                inner_err = inner_err.max(e);
                gauss(a) * v
            },
            -l,
            l,
            tol,
            1e-11,
        )?
    } else {
        integrate(
            |a| {
                let lo = if ordered { a } else { -l };
                let (v, _) = integrate(
                    |b| {
                        let lo2 = if ordered { b } else { -l };
                        let (v, e) = integrate(|c| gauss(c) * vandermonde_sinh(&[a, b, c]), lo2, l, tol, 1e-11)
                            .unwrap_or((f64::NAN, f64::NAN));
                        inner_err = inner_err.max(e);
                        gauss(b) * v
                    },
                    lo,
                    l,
                    tol,
                    1e-10,
                )
                .unwrap_or((f64::NAN, f64::NAN));
                gauss(a) * v
            },
            -l,
            l,
            tol,
            1e-9,
        )?
    };
    if !raw.is_finite() {
        return Err(Error::Quadrature {
            achieved: f64::INFINITY,
            wanted: tol,
        });
    }
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let mult = if ordered { 1.0 } else { 1.0 / fact };
    let pref = (-g * nf * (nf * nf - 1.0) / 12.0).exp() * mult;
    let value = raw * pref;
    let log = LogComplex::from_complex(Complex64::new(value, 0.0));
    let rel = (err + inner_err) / raw.abs();
    Ok(PartitionResult::from_log(log, PartitionRoute::DirectIntegral, rel))
}

/// Direct quadrature over the full box `[-L, L]^N`.
pub fn partition_integral(qp: QParam, n: usize) -> Result<PartitionResult> {
    partition_integral_with(qp, n, false)
}

/// Normalisation constants `(c_N, c̃_N)` of the x-space and φ-space
/// densities, in log form.
pub fn normalization_constants(n: usize, qp: QParam) -> Result<(LogValue, LogValue)> {
    if n < 1 {
        return domain("N must be positive");
    }
    let g = qp.g();
    let q = qp.q();
    let nf = n as f64;
    let mut ln = -g * nf * (4.0 * nf * nf - 1.0) / 6.0;
    for k in 1..=n {
        ln -= (k as f64).ln();
    }
    // ∏_{k<N} (q;q)_k = ∏_{i<N} (1 - q^i)^{N-i}
    for i in 1..n {
        ln -= (n - i) as f64 * (-q.powi(i as i32)).ln_1p();
    }
    let c = LogValue::from_ln(ln);
    let ct = LogValue::from_ln(ln + g * nf.powi(3) / 2.0);
    Ok((c, ct))
}

/// Partition function from `c̃_N`: `(g/2π)^{N/2} e^{-gN(N²-1)/12}/(c̃_N N!)`.
pub fn partition_from_normalization(n: usize, qp: QParam) -> Result<f64> {
    let (_, ct) = normalization_constants(n, qp)?;
    let g = qp.g();
    let nf = n as f64;
    let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    Ok((nf / 2.0 * (g / (2.0 * PI)).ln() - g * nf * (nf * nf - 1.0) / 12.0 - ct.log_abs - ln_fact).exp())
}
