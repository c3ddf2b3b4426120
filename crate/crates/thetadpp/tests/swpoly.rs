use proptest::prelude::*;
use thetadpp::numeric::integrate;
use thetadpp::qspecial::QParam;
use thetadpp::swpoly::*;

fn qp(q: f64) -> QParam {
    QParam::from_q(q).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn weight_total_mass() {
    // ∫ w dx = ∫ e^{y - y²/2g}/√(2πg) dy = e^{g/2} = q^{-1/2}
    let p = qp(0.5);
    let g = p.g();
    let s = 12.0 * g.sqrt();
    let (v, _) = integrate(|y: f64| sw_weight(y.exp(), p).unwrap() * y.exp(), -s, g + s, 1e-13, 0.0).unwrap();
    assert!((v - 0.5f64.powf(-0.5)).abs() < 1e-10);
}

#[test]
fn orthonormality() {
    for q in [0.3, 0.5, 0.7] {
        let gm = orthonormality_matrix(12, qp(q), 1e-11).unwrap();
        for (i, row) in gm.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((v - d).abs() < 1e-8, "q={q} G[{i}][{j}] = {v}");
            }
        }
    }
}

#[test]
fn polynomial_mpmath_values() {
    // 80-digit mpmath evaluations of the defining sum
    let p = qp(0.5);
    assert!(rel(sw_poly(6, 3.2, p).unwrap(), -0.092_042_827_446_317_09) < 1e-12);
    let (bare, weighted) = sw_scaled_eval(10, 1.0, 10.0, p).unwrap();
    assert!(rel(bare.to_f64(), -91_002.130_720_328_86) < 1e-12);
    assert!(rel(weighted.to_f64(), -0.001_877_372_003_180_512_8) < 1e-12);
    let (_, w40) = sw_scaled_eval(40, 1.0, 40.0, p).unwrap();
    assert!(rel(w40.to_f64(), 3.124_301_005_166_29e-10) < 1e-9);
}

#[test]
fn weighted_n40_matches_leading_scale() {
    let p = qp(0.5);
    let (_, w) = sw_scaled_eval(40, 1.0, 40.0, p).unwrap();
    let e = weighted_expansion(40, 1.0, p, 1.0).unwrap();
    assert!(w.to_f64().is_finite());
    assert!(rel(w.to_f64(), e.weighted.to_f64()) < 1e-9);
}

#[test]
fn scaled_expansion_error_order() {
    let p = qp(0.5);
    let mut prev = f64::INFINITY;
    for n in 10..=30 {
        let sp = ScalingParams::new(1.0, n).unwrap();
        let e = scaled_expansion(&sp, 1.0, p, ExpansionTerms::Full).unwrap();
        let (exact, _) = sw_scaled_eval(n, 1.0, n as f64, p).unwrap();
        let err = (exact.div(e.value).to_f64() - 1.0).abs();
        assert!(err < 100.0 * 0.5f64.powi(n as i32), "n={n} err={err}");
        assert!(err < prev, "n={n}");
        prev = err;
        assert_eq!(e.order_exponent, n as f64);
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn scaled_expansion_correction_matters() {
    // at τ = 0.9 both indicator terms are active; without them the fitted
    // decay rate of the relative error falls well short of q^{τn}
    let p = qp(0.5);
    let tau = 0.9;
    let (mut xs, mut full, mut lead) = (vec![], vec![], vec![]);
    for n in 10..=40 {
        let sp = ScalingParams::new(tau, n).unwrap();
        let (exact, _) = sw_scaled_eval(n, 1.0, tau * n as f64, p).unwrap();
        let f = scaled_expansion(&sp, 1.0, p, ExpansionTerms::Full).unwrap();
        let l = scaled_expansion(&sp, 1.0, p, ExpansionTerms::Leading).unwrap();
        let ef = (exact.div(f.value).to_f64() - 1.0).abs();
        assert!(ef < 100.0 * 0.5f64.powf(f.order_exponent), "n={n} {ef}");
        xs.push(n as f64);
        full.push(ef.ln());
        lead.push((exact.div(l.value).to_f64() - 1.0).abs().ln());
    }
    let target = tau * 0.5f64.ln();
    let sf = slope(&xs, &full);
    let sl = slope(&xs, &lead);
    assert!(((sf - target) / target).abs() < 0.15, "{sf}");
    assert!(sl / target < 0.75, "{sl}");
}

#[test]
fn weighted_consistent_with_scaled() {
    // with τ' = a/n the first expansion times the weight equals the second
    let (n, u, tau) = (12, 0.7, 1.0);
    let p = qp(0.4);
    let a = even_shift(tau, n);
    let sp = ScalingParams::new(a as f64 / n as f64, n).unwrap();
    let l1 = scaled_expansion(&sp, u, p, ExpansionTerms::Full).unwrap();
    let l2 = weighted_expansion(n, u, p, tau).unwrap();
    assert!(rel(l1.weighted.to_f64(), l2.weighted.to_f64()) < 1e-10);
    assert!(rel(l1.value.to_f64(), l2.value.to_f64()) < 1e-10);
}

#[test]
fn weighted_expansion_accuracy_n24() {
    let p = qp(0.5);
    for u in [0.5, 1.0, 2.0] {
        let e = weighted_expansion(24, u, p, 1.0).unwrap();
        let (_, exact) = sw_scaled_eval(24, u, even_shift(1.0, 24) as f64, p).unwrap();
        assert!(rel(exact.to_f64(), e.weighted.to_f64()) < 1e-5, "u={u}");
    }
}

#[test]
fn weighted_expansion_sign_pattern() {
    // exact weighted values at u = 1, q = 0.5: signs + + - - for n = 12..15,
    // i.e. (-1)^{n - a/2}, not an alternation in n
    let p = qp(0.5);
    let want = [
        (12, 0.000_659_467_719_254_485),
        (13, 0.000_326_110_685_574_337),
        (14, -0.000_232_403_693_733_636),
        (15, -0.000_115_561_679_634_175),
    ];
    for (n, v) in want {
        let (_, exact) = sw_scaled_eval(n, 1.0, even_shift(1.0, n) as f64, p).unwrap();
        assert!(rel(exact.to_f64(), v) < 1e-12, "n={n}");
        let e = weighted_expansion(n, 1.0, p, 1.0).unwrap();
        assert_eq!(e.weighted.sign, v.signum(), "n={n}");
    }
}

#[test]
fn weighted_expansion_error_slope() {
    let p = qp(0.5);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (12..=28)
        .map(|n| {
            let e = weighted_expansion(n, 1.0, p, 1.0).unwrap();
            let (_, exact) = sw_scaled_eval(n, 1.0, even_shift(1.0, n) as f64, p).unwrap();
            (n as f64, (exact.div(e.weighted).to_f64() - 1.0).abs().ln())
        })
        .unzip();
    let slope = slope(&xs, &ys);
    let lnq = 0.5f64.ln();
    assert!(((slope - lnq) / lnq).abs() < 0.15, "slope {slope}");
}

#[test]
fn majorant_bound_holds() {
    let p = qp(0.5);
    let sp = ScalingParams::new(1.0, 16).unwrap();
    let r = remainder_measured(&sp, 1.0, p).unwrap();
    assert!(r.abs() <= remainder_majorant(&sp, 1.0, p).unwrap());
    for q in [0.4, 0.5] {
        for tau in [0.9, 1.0, 1.5] {
            for u in [0.5, 1.0, 2.0] {
                for n in 8..=24 {
                    let sp = ScalingParams::new(tau, n).unwrap();
                    let r = remainder_measured(&sp, u, qp(q)).unwrap();
                    let m = remainder_majorant(&sp, u, qp(q)).unwrap();
                    assert!(r.abs() <= m, "q={q} τ={tau} u={u} n={n}: {r} > {m}");
                }
            }
        }
    }
}

#[test]
fn majorant_limit() {
    let p = qp(0.5);
    let c = majorant_limit_constant(1.0, p);
    let ratio = |n| {
        let sp = ScalingParams::new(1.0, n).unwrap();
        remainder_majorant(&sp, 1.0, p).unwrap() / 0.5f64.powf(sp.order_exponent()) / c
    };
    assert!((ratio(24) - 1.0).abs() < 1e-6);
    assert!((ratio(12) - 1.0).abs() > (ratio(24) - 1.0).abs());
}

#[test]
fn majorant_monotone_from_n0() {
    let p = qp(0.4);
    let m: Vec<f64> = (1..=40)
        .map(|n| remainder_majorant(&ScalingParams::new(1.0, n).unwrap(), 1.0, p).unwrap())
        .collect();
    let n0 = (0..m.len())
        .find(|&i| m[i..].windows(2).all(|w| w[1] < w[0]))
        .map(|i| i + 1)
        .unwrap();
    assert!(n0 <= 10, "n0 = {n0}");
}

proptest! {
    #[test]
    fn weight_functional_equation(s in -3.0f64..3.0, x in 0.05f64..20.0, q in 0.05f64..0.95) {
        let p = qp(q);
        let lhs = sw_log_weight((q.powf(s) * x).ln(), p);
        let rhs = s * s / 2.0 * q.ln() + s * x.ln() + sw_log_weight(x.ln(), p);
        prop_assert!((lhs.exp() / rhs.exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn remainder_bound_holds(q in 0.05f64..0.95, n in 0usize..=50) {
        prop_assert!(remainder_r(qp(q), n).abs() < remainder_r_bound(qp(q), n));
    }
}
