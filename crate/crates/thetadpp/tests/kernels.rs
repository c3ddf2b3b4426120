use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thetadpp::kernels::*;
use thetadpp::numeric::integrate;
use thetadpp::qspecial::{jacobi_theta, q_pochhammer_real, gosper_trig, GosperKind, JacobiKind, PochLength, QParam};
use thetadpp::swpoly::ExpansionTerms;

use num_complex::Complex64;
use std::f64::consts::PI;

fn qp(q: f64) -> QParam {
    QParam::from_q(q).unwrap()
}

fn gp(g: f64) -> QParam {
    QParam::from_g(g).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn finite_kernel_mpmath_value() {
    // 50-digit sum of p_n p_n √(w w)
    let k = kernel_finite(3, 0.7, 2.5, qp(0.5), FiniteForm::Auto).unwrap();
    assert_eq!(k.form, KernelForm::ChristoffelDarboux);
    assert!(rel(k.value, 0.246_572_418_230_727_83) < 1e-12);
}

#[test]
fn finite_sum_vs_cd() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let p = qp(0.5);
    for n in 1..=10 {
        let mut done = 0;
        while done < 50 {
            let x: f64 = (rng.random_range(-3.0..6.0f64)).exp();
            let y: f64 = (rng.random_range(-3.0..6.0f64)).exp();
            if (x - y).abs() <= 0.01 {
                continue;
            }
            let a = kernel_finite(n, x, y, p, FiniteForm::Sum).unwrap().value;
            let b = kernel_finite(n, x, y, p, FiniteForm::Auto).unwrap().value;
            let scale = (kernel_finite(n, x, x, p, FiniteForm::Sum).unwrap().value
                * kernel_finite(n, y, y, p, FiniteForm::Sum).unwrap().value)
                .sqrt();
            assert!((a - b).abs() < 1e-10 * a.abs().max(1e-6 * scale), "n={n} x={x} y={y}: {a} {b}");
            done += 1;
        }
    }
}

#[test]
fn finite_symmetry_and_diagonal() {
    let p = qp(0.5);
    let a = kernel_finite(5, 0.4, 3.0, p, FiniteForm::Auto).unwrap().value;
    let b = kernel_finite(5, 3.0, 0.4, p, FiniteForm::Auto).unwrap().value;
    assert!(rel(a, b) < 1e-14);
    let d = kernel_finite(5, 2.0, 2.0, p, FiniteForm::Auto).unwrap();
    assert_eq!(d.form, KernelForm::DiagonalAnalytic);
    let s = kernel_finite(5, 2.0, 2.0, p, FiniteForm::Sum).unwrap().value;
    assert!(rel(d.value, s) < 1e-12);
    let near = kernel_finite(5, 2.0, 2.0 * (1.0 + 2e-6), p, FiniteForm::Auto).unwrap();
    assert_eq!(near.form, KernelForm::ChristoffelDarboux);
    assert!(rel(near.value, s) < 1e-5);
}

#[test]
fn mapped_kernel_consistency() {
    let p = qp(0.5);
    let n = 4;
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..20 {
        let phi: f64 = rng.random_range(-3.0..3.0);
        let psi: f64 = rng.random_range(-3.0..3.0);
        let s = n as f64 * p.g();
        let m = kernel_finite_mapped(n, phi, psi, p, FiniteForm::Auto).unwrap().value;
        let k = kernel_finite(n, (phi + s).exp(), (psi + s).exp(), p, FiniteForm::Auto).unwrap().value;
        assert!(rel(m, (0.5 * (phi + psi) + s).exp() * k) < 1e-12);
        assert!(kernel_finite_mapped(n, phi, phi, p, FiniteForm::Auto).unwrap().value >= 0.0);
    }
}

#[test]
fn mapped_trace_is_n() {
    let p = qp(0.5);
    for n in 1..=6 {
        let g = p.g();
        let lo = -(n as f64) * g - 12.0 * g.sqrt() - 2.0;
        let hi = n as f64 * g + 12.0 * g.sqrt() + 2.0;
        let (v, _) = integrate(
            |phi| kernel_finite_mapped(n, phi, phi, p, FiniteForm::Auto).unwrap().value,
            lo,
            hi,
            1e-10,
            0.0,
        )
        .unwrap();
        let tol = if n == 3 { 1e-6 } else { 1e-7 };
        assert!((v - n as f64).abs() < tol, "n={n}: {v}");
    }
}

#[test]
fn reproducing_property() {
    let p = qp(0.5);
    let n = 3;
    let g = p.g();
    let (lo, hi) = (-(n as f64) * g - 12.0 * g.sqrt() - 2.0, n as f64 * g + 12.0 * g.sqrt() + 2.0);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..10 {
        let a: f64 = rng.random_range(-2.0..2.0);
        let b: f64 = rng.random_range(-2.0..2.0);
        let k = |x: f64, y: f64| kernel_finite_mapped(n, x, y, p, FiniteForm::Sum).unwrap().value;
        let (v, _) = integrate(|z| k(a, z) * k(z, b), lo, hi, 1e-11, 0.0).unwrap();
        assert!((v - k(a, b)).abs() < 1e-7, "{a} {b}");
    }
}

#[test]
fn two_by_two_minors_nonnegative() {
    let p = qp(0.5);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for _ in 0..100 {
        let x: f64 = rng.random_range(-3.0..5.0f64).exp();
        let y: f64 = rng.random_range(-3.0..5.0f64).exp();
        let k = |a, b| kernel_finite(4, a, b, p, FiniteForm::Auto).unwrap().value;
        assert!(k(x, x) * k(y, y) - k(x, y) * k(y, x) >= -1e-10);
    }
}

#[test]
fn theta_kernel_values() {
    let p = qp(0.5);
    // 50-digit mpmath
    assert!(rel(kernel_theta(1.3, 0.6, p).unwrap().value, 0.380_857_374_458_488_31) < 1e-12);
    assert!(rel(kernel_theta(1.3, 1.3, p).unwrap().value, 0.532_082_658_773_765_11) < 1e-12);
    let a = kernel_theta(1.3, 0.6, p).unwrap().value;
    assert!(rel(kernel_theta(0.6, 1.3, p).unwrap().value, a) < 1e-14);
    let d = kernel_theta(1.3, 1.3, p).unwrap().value;
    let near = kernel_theta(1.3, 1.3 * (1.0 + 1e-7), p).unwrap().value;
    assert!(rel(near, d) < 1e-5);
}

#[test]
fn theta_kernel_quasi_periodic() {
    let p = qp(0.5);
    let base = kernel_theta(1.3, 0.6, p).unwrap().value;
    for n in -2i32..=2 {
        let s = 0.5f64.powi(2 * n);
        let v = s * kernel_theta(s * 1.3, s * 0.6, p).unwrap().value;
        assert!(rel(v, base) < 1e-11, "n={n}");
    }
}

#[test]
fn infty_mpmath_values() {
    // 40-digit mpmath evaluation of the theta-series form
    let k = kernel_infty(0.7, -0.2, gp(1.0), InftyForm::Auto).unwrap();
    assert!(rel(k.value, 0.291_518_313_155_058_31) < 1e-12);
    let d = kernel_infty(0.3, 0.3, gp(1.0), InftyForm::Auto).unwrap();
    assert!(rel(d.value, 0.453_225_535_234_128_92) < 1e-12);
    let s = kernel_infty(0.05, 0.3, gp(0.1), InftyForm::Auto).unwrap();
    assert_eq!(s.form, KernelForm::SmallCoupling);
    assert!(rel(s.value, -0.955_890_486_193_621_5) < 1e-10);
    let sd = kernel_infty(0.05, 0.05, gp(0.1), InftyForm::Auto).unwrap();
    assert!(rel(sd.value, 5.0) < 1e-10);
}

#[test]
fn infty_forms_agree_fixed_point() {
    let p = gp(1.0);
    let base = kernel_infty(0.7, -0.2, p, InftyForm::ThetaSeries).unwrap().value;
    for f in [InftyForm::Theta4Form, InftyForm::Theta2Form, InftyForm::GosperForm, InftyForm::SmallCoupling] {
        let v = kernel_infty(0.7, -0.2, p, f).unwrap().value;
        assert!(rel(v, base) < 1e-10, "{f:?}: {v} vs {base}");
    }
    let base = kernel_infty(0.4, 0.4, p, InftyForm::ThetaSeries).unwrap().value;
    for f in [InftyForm::Theta4Form, InftyForm::Theta2Form, InftyForm::GosperForm, InftyForm::SmallCoupling] {
        let v = kernel_infty(0.4, 0.4, p, f).unwrap().value;
        assert!(rel(v, base) < 1e-10, "{f:?} diagonal: {v} vs {base}");
    }
}

#[test]
fn theta4_gosper_bridge() {
    // (1/√(-iω)) ϑ₂(ζ/ω | -1/ω) = (Q;Q)(Q;Q²) cos_Q(ζ/ω), Q = e^{iπω}
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let i = Complex64::new(0.0, 1.0);
    for _ in 0..50 {
        let zeta = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        let omega = Complex64::new(0.0, rng.random_range(0.2..2.0));
        let qq = (i * PI * omega).exp().re;
        let lhs = jacobi_theta(JacobiKind::Two, zeta / omega, -1.0 / omega).unwrap().value / (-i * omega).sqrt();
        let rhs = q_pochhammer_real(qq, qq, PochLength::Infinity).unwrap().value
            * q_pochhammer_real(qq, qq * qq, PochLength::Infinity).unwrap().value
            * gosper_trig(GosperKind::Cos, zeta / omega / PI, qq).unwrap().value;
        assert!((lhs - rhs).norm() < 1e-10 * rhs.norm().max(1.0), "{zeta} {omega}");
    }
}

#[test]
fn density_examples() {
    for g in [1.0, 5.0, 25.0] {
        let p = gp(g);
        for phi in [-0.3, 0.0, 0.9] {
            let a = density_profile(phi, p).unwrap();
            let b = density_profile(phi + 2.0 * g, p).unwrap();
            assert!(rel(b, a) < 1e-9);
        }
        let (mean, _) = integrate(|x| density_profile(x, p).unwrap(), -g, g, 1e-12, 0.0).unwrap();
        assert!((mean / (2.0 * g) - 1.0 / (2.0 * g)).abs() < 1e-6, "g={g}: {mean}");
    }
    let p = gp(25.0);
    let r0 = density_profile(0.0, p).unwrap();
    assert!(rel(r0, 2.0 * (-12.5f64).exp() / (2.0 * PI * 25.0).sqrt()) < 1e-3);
    for phi in [0.25, 0.5] {
        assert!(rel(density_profile(phi, p).unwrap() / r0, f64::cosh(phi)) < 0.01);
    }
    for phi in [0.25, 0.5, 1.0] {
        let refined = f64::cosh(phi) * (-phi * phi / 50.0).exp();
        assert!(rel(density_profile(phi, p).unwrap() / r0, refined) < 1e-4);
    }
}

#[test]
fn density_positive() {
    for g in [1.0, 5.0, 25.0] {
        let p = gp(g);
        for i in 0..=400 {
            let phi = -g + 2.0 * g * i as f64 / 400.0;
            assert!(density_profile(phi, p).unwrap() > 0.0, "g={g} φ={phi}");
        }
    }
}

#[test]
fn meanfield_limit() {
    for phi in [-1.0, 0.0, 2.5] {
        assert!((density_meanfield(200, phi, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn subsequence_parity_split() {
    let s = subsequence(1.5, 0, 6, 8).unwrap();
    assert_eq!(s.members, vec![8, 12, 16, 20, 24, 28]);
    for &n in &s.members {
        assert!(admissible(1.5, n));
    }
}

#[test]
fn convergence_exact_trend() {
    let pts = [(1.0, 1.0), (0.7, 1.4), (2.0, 0.5)];
    let s = subsequence(1.0, 0, 7, 8).unwrap();
    let t = convergence_study(1.0, qp(0.5), &pts, &s.members, StudySubject::Exact).unwrap();
    assert!(t.converging);
    assert!(t.slope < 0.0);
    for w in t.rows.windows(2) {
        assert!(w[1].sup_rel_error < w[0].sup_rel_error);
    }
}

#[test]
fn convergence_needs_correction() {
    let pts = [(0.7, 1.4), (2.0, 0.5), (0.5, 1.0)];
    let s = subsequence(1.0, 0, 7, 8).unwrap();
    let full = convergence_study(1.0, qp(0.5), &pts, &s.members, StudySubject::Expansion(ExpansionTerms::Full)).unwrap();
    let lead =
        convergence_study(1.0, qp(0.5), &pts, &s.members, StudySubject::Expansion(ExpansionTerms::Leading)).unwrap();
    assert!(full.converging);
    assert!(!lead.converging);
    assert!(lead.rows.last().unwrap().sup_rel_error > 0.1);
}

#[test]
fn sine_limit_monotone() {
    let rows = sine_limit_study(&[0.4, 0.2, 0.1, 0.05], &[0.0, 0.25, 0.5, 1.0]).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].sup_abs_error < w[0].sup_abs_error);
    }
    // the first-order deviation is g/(2π), attained at φ = ψ = 0
    for r in &rows {
        assert!(rel(r.sup_abs_error, r.g / (2.0 * PI)) < 0.1, "{r:?}");
    }
    let p = gp(0.05);
    let d = 2.0 * 0.05 * density_profile(0.0, p).unwrap();
    assert!((d - 1.0).abs() < 0.01);
}

fn natural_rel(a: f64, b: f64, phi: f64, psi: f64, p: QParam) -> f64 {
    let s = (kernel_infty(phi, phi, p, InftyForm::ThetaSeries).unwrap().value
        * kernel_infty(psi, psi, p, InftyForm::ThetaSeries).unwrap().value)
        .sqrt();
    (a - b).abs() / s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn infty_periodic(phi in -3.0f64..3.0, psi in -3.0f64..3.0, g in 0.3f64..3.0) {
        let p = gp(g);
        let a = kernel_infty(phi, psi, p, InftyForm::Auto).unwrap().value;
        let b = kernel_infty(phi + 2.0 * g, psi + 2.0 * g, p, InftyForm::Auto).unwrap().value;
        prop_assert!(natural_rel(a, b, phi, psi, p) < 1e-10);
        let c = kernel_infty(psi, phi, p, InftyForm::Auto).unwrap().value;
        prop_assert!(natural_rel(a, c, phi, psi, p) < 1e-13);
    }

    #[test]
    fn infty_three_forms(phi in -3.0f64..3.0, psi in -3.0f64..3.0, g in 0.3f64..3.0) {
        let p = gp(g);
        let a = kernel_infty(phi, psi, p, InftyForm::ThetaSeries).unwrap().value;
        for f in [InftyForm::Theta4Form, InftyForm::Theta2Form, InftyForm::GosperForm] {
            let b = kernel_infty(phi, psi, p, f).unwrap().value;
            prop_assert!(natural_rel(a, b, phi, psi, p) < 1e-9, "{:?} {} {}", f, a, b);
        }
    }

    #[test]
    fn infty_theta_relation(phi in -2.0f64..2.0, psi in -2.0f64..2.0, g in 0.3f64..3.0) {
        let p = gp(g);
        let a = kernel_infty(phi, psi, p, InftyForm::ThetaSeries).unwrap().value;
        let b = (0.5 * (phi + psi)).exp() * kernel_theta(phi.exp(), psi.exp(), p).unwrap().value;
        prop_assert!(natural_rel(a, b, phi, psi, p) < 1e-10);
    }

    #[test]
    fn theta_kernel_quasi_periodic_random(u in 0.2f64..5.0, v in 0.2f64..5.0, q in 0.2f64..0.8, n in -2i32..=2) {
        let p = qp(q);
        let s = q.powi(2 * n);
        let a = kernel_theta(u, v, p).unwrap().value;
        let b = s * kernel_theta(s * u, s * v, p).unwrap().value;
        let scale = (kernel_theta(u, u, p).unwrap().value * kernel_theta(v, v, p).unwrap().value).sqrt();
        prop_assert!((a - b).abs() < 1e-10 * scale);
    }
}
