//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria 5 and 7 cannot meet their pinned tolerances (see README). They
//! are run unchanged and expected to fail, but only in the measured way:
//! any other outcome, or a failure elsewhere, fails this target.

use std::process::ExitCode;
use thetadpp::acceptance::{run_all, CriterionOutcome};

const KNOWN_RED: [usize; 2] = [5, 7];

fn fails_as_analysed(o: &CriterionOutcome) -> bool {
    match o.id {
        // at N=20: 5.9e-3 (τ=1, ≈ 6 q^{N/2}) and 6.0e-2 (τ=1.5, q=0.6)
        5 => {
            let (e1, e2) = (o.metric("err_tau1"), o.metric("err_tau15"));
            let (s1, s2) = (o.metric("slope_tau1"), o.metric("slope_tau15"));
            matches!((e1, e2, s1, s2), (Some(e1), Some(e2), Some(s1), Some(s2))
                if (e1 / 5.86e-3 - 1.0).abs() < 0.05 && (e2 / 6.04e-2 - 1.0).abs() < 0.05 && s1 < 0.0 && s2 < 0.0)
        }
        // first-order deviation g/(2π) at the origin; monotone part holds
        7 => {
            let want = 0.05 / (2.0 * std::f64::consts::PI);
            matches!((o.metric("err_005"), o.metric("decreasing")), (Some(e), Some(d))
                if (e / want - 1.0).abs() < 0.05 && d == 1.0)
        }
        _ => false,
    }
}

fn main() -> ExitCode {
    let outcomes = run_all();
    let mut unexpected = vec![];
    for o in &outcomes {
        println!("{}", o.line());
        let red = KNOWN_RED.contains(&o.id);
        if red && o.passed {
            unexpected.push(format!("criterion {} passed but was expected to fail", o.id));
        } else if red && !fails_as_analysed(o) {
            unexpected.push(format!("criterion {} failed differently from the analysis", o.id));
        } else if !red && !o.passed {
            unexpected.push(format!("criterion {} failed", o.id));
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria pass; known red: {:?}", outcomes.len(), KNOWN_RED);
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        for u in &unexpected {
            println!("unexpected: {u}");
        }
        ExitCode::FAILURE
    }
}
