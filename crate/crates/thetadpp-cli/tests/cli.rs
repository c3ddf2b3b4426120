use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thetadpp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap()
        .trim()
        .parse()
        .unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# thetadpp "));
    lines.skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn eval_examples() {
    let o = run(&["eval", "theta", "--z", "1", "--q", "0.1"]);
    assert!(o.status.success());
    assert!((field(&stdout(&o), "value") - 1.200_200_002).abs() < 1e-9);
    let o = run(&["eval", "sw-poly", "--n", "0", "--x", "5", "--q", "0.5"]);
    assert!((field(&stdout(&o), "value") - 0.5f64.powf(0.25)).abs() < 1e-15);
    let o = run(&["eval", "kernel-sine", "--phi", "0.5", "--psi", "0"]);
    assert!((field(&stdout(&o), "value") - 2.0 / std::f64::consts::PI).abs() < 1e-15);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["eval", "nonsense", "--z", "1"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "theta", "--q", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "theta", "--z", "1", "--q", "0.5", "--g", "1"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "theta", "--z", "1", "--q", "1.5"]).status.code(), Some(3));
    assert_eq!(run(&["eval", "theta", "--z", "0", "--q", "0.5"]).status.code(), Some(3));
    assert_eq!(
        run(&["density", "--g", "1", "--out", "/nonexistent-dir/rho.csv"]).status.code(),
        Some(4)
    );
}

#[test]
fn partition_json() {
    let o = run(&["partition", "--k", "1", "--N", "2"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["value_re"].as_f64().unwrap() + 0.577_35).abs() < 1e-5);
    assert!(v["value_im"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["route"], "closed-form-physical");
    for key in ["k", "N", "g_s_re", "g_s_im", "err"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn density_mean_and_period() {
    let dir = std::env::temp_dir().join(format!("thetadpp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("rho.csv");
    let o = run(&["density", "--g", "1", "--points", "601", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!((field(&s, "mean") - 0.5).abs() < 1e-6);
    assert_eq!(field(&s, "period"), 2.0);
    let rows = csv_rows(&std::fs::read_to_string(&path).unwrap());
    assert_eq!(rows.len(), 601);
    // grid step 0.01 over [-3, 3]: rows i and i+200 are one period apart
    for i in 0..401 {
        let a: f64 = rows[i][1].parse().unwrap();
        let b: f64 = rows[i + 200][1].parse().unwrap();
        assert!((a / b - 1.0).abs() < 1e-9, "row {i}");
    }
}

#[test]
fn kernel_grids() {
    let o = run(&["kernel-grid", "--kind", "sine", "--size", "41"]);
    let rows = csv_rows(&stdout(&o));
    let k = |i: usize, j: usize| rows[i * 41 + j][2].parse::<f64>().unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..40 {
        for j in 0..40 {
            worst = worst.max((k(i, j) - k(i + 1, j + 1)).abs());
        }
    }
    assert!(worst < 1e-12);
    let o = run(&["kernel-grid", "--kind", "infty", "--g", "1", "--size", "41"]);
    let rows = csv_rows(&stdout(&o));
    let d: Vec<f64> = (0..41).map(|i| rows[i * 41 + i][2].parse().unwrap()).collect();
    let m = d.iter().sum::<f64>() / 41.0;
    assert!(d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 41.0 > 1e-3);
    // N = 1: √q e^{(φ+ψ)/2 + g} √(w w) at x = e^{φ+g}
    let o = run(&["kernel-grid", "--kind", "finite", "--N", "1", "--g", "1", "--size", "5"]);
    for r in csv_rows(&stdout(&o)) {
        let (p, s, v): (f64, f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap());
        let w = |y: f64| (-y * y / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let want = (-0.5f64).exp() * (0.5 * (p + s) + 1.0).exp() * (w(p + 1.0) * w(s + 1.0)).sqrt();
        assert!((v / want - 1.0).abs() < 1e-12);
    }
}

#[test]
fn converge_column_decreases() {
    let o = run(&["converge", "--tau", "1", "--parity", "0", "--q", "0.5", "--n-max", "20"]);
    let errs: Vec<f64> = csv_rows(&stdout(&o)).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(errs.len(), 7);
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = std::env::temp_dir().join(format!("thetadpp-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# defaults\nq = 0.5\ntau=1\nn-max=14\n").unwrap();
    let o = run(&["converge", "--config", cfg.to_str().unwrap(), "--n-max", "10"]);
    assert!(o.status.success());
    assert_eq!(csv_rows(&stdout(&o)).len(), 2);
    let o = run(&["converge", "--config", cfg.to_str().unwrap()]);
    assert_eq!(csv_rows(&stdout(&o)).len(), 4);
}

#[test]
fn sampling_is_deterministic() {
    let a = run(&["sample", "--N", "3", "--q", "0.5", "--count", "20", "--seed", "9"]);
    let b = run(&["sample", "--N", "3", "--q", "0.5", "--count", "20", "--seed", "9"]);
    assert_eq!(a.stdout, b.stdout);
    let rows = csv_rows(&stdout(&a));
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r[2].split(';').count() == 3));
    let h = run(&["sample", "--N", "2", "--q", "0.5", "--count", "500", "--hist-bins", "10"]);
    let rows = csv_rows(&stdout(&h));
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().map(|r| r[2].parse::<u64>().unwrap()).sum::<u64>(), 1000);
}

#[test]
fn thread_cap_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_thetadpp"))
        .args(["eval", "kernel-sine", "--phi", "0", "--psi", "1"])
        .env("THETA_DPP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_thetadpp"))
        .args(["sine-limit", "--format", "json"])
        .env("THETA_DPP_THREADS", "2")
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn selftest_reports_every_criterion() {
    let o = run(&["selftest"]);
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 12);
    // exits 1 while any criterion is red
    let any_fail = s.lines().any(|l| l.starts_with("FAIL"));
    assert_eq!(o.status.code(), Some(if any_fail { 1 } else { 0 }));
}
