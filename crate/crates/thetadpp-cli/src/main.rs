//! `thetadpp` command-line front end.
//!
//! Exit codes: 0 success, 1 acceptance failure, 2 usage, 3 domain or
//! numerical error, 4 I/O.

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use thetadpp::dpp::{
    correlation_check, default_window, finite_kernel, histogram_cells, sample_metropolis_chains, Grid, MetropolisConfig,
    PointSample, ProjectionSampler, SAMPLING_NODES,
};
use thetadpp::kernels::{
    convergence_study, default_test_points, density_meanfield, density_profile, kernel_finite, kernel_finite_mapped,
    kernel_infty, kernel_sine, kernel_theta, sine_limit_study, subsequence, FiniteForm, InftyForm, KernelEval,
    StudySubject,
};
use thetadpp::numeric::integrate;
use thetadpp::partition::{partition_integral, partition_physical, partition_product, PartitionResult};
use thetadpp::qspecial::{q_pochhammer_real, theta, theta_prime, PochLength, QParam, SeriesResult};
use thetadpp::swpoly::{
    remainder_majorant, even_shift, scaled_expansion, weighted_expansion, remainder_measured, remainder_r,
    remainder_r_bound, remainder_r_bound_old, sw_poly, sw_scaled_eval, sw_weight, ExpansionTerms, ScalingParams,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "thetadpp", version, about = "Stieltjes-Wigert kernels and the Jacobi-theta point process")]
struct Cli {
    /// key=value file with defaults for any flag; command-line flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; standard output when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Copy)]
struct Coupling {
    /// Deformation parameter q in (0,1)
    #[arg(long, conflicts_with = "g")]
    q: Option<f64>,
    /// Coupling g_s > 0, q = e^{-g_s}
    #[arg(long)]
    g: Option<f64>,
}

impl Coupling {
    fn resolve(self) -> Result<QParam, CliError> {
        match (self.q, self.g) {
            (Some(q), None) => Ok(QParam::from_q(q)?),
            (None, Some(g)) => Ok(QParam::from_g(g)?),
            _ => Err(CliError::Usage("exactly one of --q and --g is required".into())),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Evaluate one library function
    Eval(EvalArgs),
    /// Density profile of the limiting process on a uniform grid
    Density(DensityArgs),
    /// Kernel values on a square grid
    KernelGrid(KernelGridArgs),
    /// Finite-N kernel against the theta kernel along a subsequence
    Converge(ConvergeArgs),
    /// Distance to the sine kernel as the coupling shrinks
    SineLimit(SineLimitArgs),
    /// Remainder bounds R(q;n) and the majorant M(n)
    Bounds(BoundsArgs),
    /// Polynomial expansion against the exact scaled polynomial
    Expand(ExpandArgs),
    /// Chern-Simons partition function (JSON)
    Partition(PartitionArgs),
    /// Draw configurations or a one-point histogram
    Sample(SampleArgs),
    /// Run every acceptance criterion
    Selftest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Function {
    Theta,
    ThetaPrime,
    QPochhammer,
    SwPoly,
    SwWeight,
    KernelFinite,
    KernelMapped,
    KernelTheta,
    KernelInfty,
    KernelSine,
    Density,
    DensityMeanfield,
    RemainderR,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(value_enum)]
    function: Function,
    #[command(flatten)]
    coupling: Coupling,
    #[arg(long, allow_hyphen_values = true)]
    z: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    psi: Option<f64>,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    coupling: Coupling,
    /// lo,hi; three periods centred at 0 by default
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: Option<(f64, f64)>,
    #[arg(long, default_value_t = 601)]
    points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KernelKind {
    Infty,
    Sine,
    Theta,
    Finite,
}

#[derive(Args, Debug)]
struct KernelGridArgs {
    #[arg(long, value_enum)]
    kind: KernelKind,
    #[command(flatten)]
    coupling: Coupling,
    /// Particle number for kind=finite
    #[arg(long = "N")]
    big_n: Option<usize>,
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: Option<(f64, f64)>,
    #[arg(long, default_value_t = 101)]
    size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Subject {
    Exact,
    Full,
    Leading,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    coupling: Coupling,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    parity: i64,
    #[arg(long, default_value_t = 8)]
    n_min: usize,
    #[arg(long, default_value_t = 20)]
    n_max: usize,
    #[arg(long, value_enum, default_value_t = Subject::Exact)]
    subject: Subject,
}

#[derive(Args, Debug)]
struct SineLimitArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.2, 0.1, 0.05])]
    gs: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0, 0.25, 0.5, 1.0])]
    points: Vec<f64>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    coupling: Coupling,
    #[arg(long, default_value_t = 50)]
    n_max: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Terms {
    Full,
    Leading,
    Weighted,
}

#[derive(Args, Debug)]
struct ExpandArgs {
    #[command(flatten)]
    coupling: Coupling,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    u: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// full or leading first expansion, or the weighted second expansion
    #[arg(long, value_enum, default_value_t = Terms::Full)]
    terms: Terms,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Route {
    Physical,
    Product,
    Integral,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    /// Chern-Simons level; selects the closed form
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "N")]
    big_n: usize,
    #[arg(long, allow_hyphen_values = true)]
    g_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    g_im: Option<f64>,
    #[arg(long, value_enum)]
    route: Option<Route>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SamplerKind {
    Projection,
    Metropolis,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, value_enum, default_value_t = SamplerKind::Projection)]
    sampler: SamplerKind,
    #[arg(long = "N")]
    big_n: usize,
    #[command(flatten)]
    coupling: Coupling,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SAMPLING_NODES)]
    grid_size: usize,
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window: Option<(f64, f64)>,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Emit a one-point histogram with this many bins instead of samples
    #[arg(long)]
    hist_bins: Option<usize>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo < hi) {
        return Err("window needs lo < hi".into());
    }
    Ok((lo, hi))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(thetadpp::Error),
    Io(io::Error),
    Failed(String),
}

impl From<thetadpp::Error> for CliError {
    fn from(e: thetadpp::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Lib(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

/// A rectangular result: CSV with a `#` metadata line, or JSON records.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:e}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(x.to_string())
    }
}

struct Output {
    sink: Box<dyn Write>,
    to_file: bool,
    format: Format,
    meta: String,
}

impl Output {
    fn open(path: &Option<PathBuf>, format: Format, meta: String) -> Result<Self, CliError> {
        let (sink, to_file): (Box<dyn Write>, bool) = match path {
            Some(p) => (Box::new(io::BufWriter::new(File::create(p)?)), true),
            None => (Box::new(io::stdout().lock()), false),
        };
        Ok(Self {
            sink,
            to_file,
            format,
            meta,
        })
    }

    /// Summary lines go to standard output when the data goes to a file,
    /// and to standard error otherwise.
    fn note(&self, line: &str) {
        if self.to_file {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }

    fn table(&mut self, t: &Table) -> Result<(), CliError> {
        match self.format {
            Format::Csv => {
                writeln!(self.sink, "# {}", self.meta)?;
                let mut w = csv::Writer::from_writer(&mut self.sink);
                w.write_record(&t.columns)?;
                for r in &t.rows {
                    w.write_record(r.iter().map(cell_text))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let recs: Vec<Value> = t
                    .rows
                    .iter()
                    .map(|r| Value::Object(t.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
                    .collect();
                let doc = json!({ "meta": self.meta, "rows": recs });
                writeln!(self.sink, "{}", serde_json::to_string_pretty(&doc).map_err(io::Error::other)?)?;
            }
        }
        self.sink.flush()?;
        Ok(())
    }

    fn json(&mut self, v: &Value) -> Result<(), CliError> {
        writeln!(self.sink, "{}", serde_json::to_string_pretty(v).map_err(io::Error::other)?)?;
        self.sink.flush()?;
        Ok(())
    }

    fn text(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.sink, "{s}")?;
        self.sink.flush()?;
        Ok(())
    }
}

fn need<T>(v: Option<T>, flag: &str, f: Function) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{f:?} needs --{flag}")))
}

struct EvalOut {
    value: f64,
    abs_error: f64,
    truncation_order: usize,
    form: Option<String>,
}

impl From<SeriesResult> for EvalOut {
    fn from(s: SeriesResult) -> Self {
        Self {
            value: s.value,
            abs_error: s.abs_error_bound,
            truncation_order: s.terms_used,
            form: None,
        }
    }
}

impl From<KernelEval> for EvalOut {
    fn from(k: KernelEval) -> Self {
        Self {
            value: k.value,
            abs_error: k.abs_error,
            truncation_order: k.truncation_order,
            form: Some(format!("{:?}", k.form)),
        }
    }
}

fn plain(value: f64) -> EvalOut {
    EvalOut {
        value,
        abs_error: f64::NAN,
        truncation_order: 0,
        form: None,
    }
}

fn cmd_eval(a: &EvalArgs, out: &mut Output) -> Result<(), CliError> {
    let f = a.function;
    let qp = || a.coupling.resolve();
    let r: EvalOut = match f {
        Function::Theta => theta(need(a.z, "z", f)?, qp()?.q())?.into(),
        Function::ThetaPrime => theta_prime(need(a.z, "z", f)?, qp()?.q())?.into(),
        Function::QPochhammer => {
            let len = a.n.map(PochLength::Finite).unwrap_or(PochLength::Infinity);
            q_pochhammer_real(need(a.z, "z", f)?, qp()?.q(), len)?.into()
        }
        Function::SwPoly => plain(sw_poly(need(a.n, "n", f)?, need(a.x, "x", f)?, qp()?)?),
        Function::SwWeight => plain(sw_weight(need(a.x, "x", f)?, qp()?)?),
        Function::KernelFinite => {
            kernel_finite(need(a.n, "n", f)?, need(a.x, "x", f)?, need(a.y, "y", f)?, qp()?, FiniteForm::Auto)?.into()
        }
        Function::KernelMapped => kernel_finite_mapped(
            need(a.n, "n", f)?,
            need(a.phi, "phi", f)?,
            need(a.psi, "psi", f)?,
            qp()?,
            FiniteForm::Auto,
        )?
        .into(),
        Function::KernelTheta => kernel_theta(need(a.x, "x", f)?, need(a.y, "y", f)?, qp()?)?.into(),
        Function::KernelInfty => {
            kernel_infty(need(a.phi, "phi", f)?, need(a.psi, "psi", f)?, qp()?, InftyForm::Auto)?.into()
        }
        Function::KernelSine => plain(kernel_sine(need(a.phi, "phi", f)?, need(a.psi, "psi", f)?)),
        Function::Density => kernel_infty(need(a.phi, "phi", f)?, a.phi.unwrap(), qp()?, InftyForm::Auto)?.into(),
        Function::DensityMeanfield => {
            let g = qp()?.g();
            plain(density_meanfield(need(a.n, "n", f)?, need(a.phi, "phi", f)?, g)?)
        }
        Function::RemainderR => plain(remainder_r(qp()?, need(a.n, "n", f)?)),
    };
    match out.format {
        Format::Json => out.json(&json!({
            "function": format!("{f:?}"),
            "value": num(r.value),
            "abs_error": num(r.abs_error),
            "truncation_order": r.truncation_order,
            "form": r.form,
        })),
        Format::Csv => {
            let mut s = format!(
                "value {:.17e}\nabs_error {:.3e}\ntruncation_order {}",
                r.value, r.abs_error, r.truncation_order
            );
            if let Some(form) = r.form {
                s.push_str(&format!("\nform {form}"));
            }
            out.text(&s)
        }
    }
}

fn cmd_density(a: &DensityArgs, out: &mut Output) -> Result<(), CliError> {
    let qp = a.coupling.resolve()?;
    let g = qp.g();
    let (lo, hi) = a.window.unwrap_or((-3.0 * g, 3.0 * g));
    if a.points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    let phis: Vec<f64> = (0..a.points).map(|i| lo + (hi - lo) * i as f64 / (a.points - 1) as f64).collect();
    let rho: Vec<f64> = phis.par_iter().map(|&p| density_profile(p, qp)).collect::<Result<_, _>>()?;
    let (mean, _) = integrate(|x| density_profile(x, qp).unwrap_or(f64::NAN), -g, g, 1e-13, 0.0)?;
    out.table(&Table {
        columns: vec!["phi", "rho"],
        rows: phis.iter().zip(&rho).map(|(p, r)| vec![num(*p), num(*r)]).collect(),
    })?;
    out.note(&format!("period {}", 2.0 * g));
    out.note(&format!("mean {:.10}", mean / (2.0 * g)));
    Ok(())
}

fn cmd_kernel_grid(a: &KernelGridArgs, out: &mut Output) -> Result<(), CliError> {
    if a.size < 2 {
        return Err(CliError::Usage("--size must be at least 2".into()));
    }
    let qp = match a.kind {
        KernelKind::Sine => None,
        _ => Some(a.coupling.resolve()?),
    };
    let g = qp.map(|p| p.g()).unwrap_or(1.0);
    let (lo, hi) = a.window.unwrap_or(match a.kind {
        KernelKind::Theta => (0.25, 4.0),
        _ => (-2.0 * g, 2.0 * g),
    });
    let n = match a.kind {
        KernelKind::Finite => Some(a.big_n.ok_or_else(|| CliError::Usage("kind=finite needs --N".into()))?),
        _ => None,
    };
    let axis: Vec<f64> = (0..a.size).map(|i| lo + (hi - lo) * i as f64 / (a.size - 1) as f64).collect();
    let eval = |x: f64, y: f64| -> thetadpp::Result<f64> {
        match a.kind {
            KernelKind::Infty => Ok(kernel_infty(x, y, qp.unwrap(), InftyForm::Auto)?.value),
            KernelKind::Sine => Ok(kernel_sine(x, y)),
            KernelKind::Theta => Ok(kernel_theta(x, y, qp.unwrap())?.value),
            KernelKind::Finite => Ok(kernel_finite_mapped(n.unwrap(), x, y, qp.unwrap(), FiniteForm::Auto)?.value),
        }
    };
    let grid: Vec<Vec<f64>> = axis
        .par_iter()
        .map(|&x| axis.iter().map(|&y| eval(x, y)).collect::<thetadpp::Result<Vec<f64>>>())
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(a.size * a.size);
    for (i, x) in axis.iter().enumerate() {
        for (j, y) in axis.iter().enumerate() {
            rows.push(vec![num(*x), num(*y), num(grid[i][j])]);
        }
    }
    out.table(&Table {
        columns: vec!["phi", "psi", "K"],
        rows,
    })?;
    let diag: Vec<f64> = (0..a.size).map(|i| grid[i][i]).collect();
    let m = diag.iter().sum::<f64>() / diag.len() as f64;
    out.note(&format!(
        "diagonal variance {:.6e}",
        diag.iter().map(|d| (d - m).powi(2)).sum::<f64>() / diag.len() as f64
    ));
    let shift = (0..a.size - 1)
        .flat_map(|i| (0..a.size - 1).map(move |j| (i, j)))
        .map(|(i, j)| (grid[i][j] - grid[i + 1][j + 1]).abs())
        .fold(0.0, f64::max);
    out.note(&format!("max |K(φ,ψ) - K(φ+h,ψ+h)| {shift:.3e}"));
    Ok(())
}

fn cmd_converge(a: &ConvergeArgs, out: &mut Output) -> Result<(), CliError> {
    let qp = a.coupling.resolve()?;
    let ns: Vec<usize> = subsequence(a.tau, a.parity, a.n_max + 1, a.n_min)?
        .members
        .into_iter()
        .filter(|&n| n <= a.n_max)
        .collect();
    let subject = match a.subject {
        Subject::Exact => StudySubject::Exact,
        Subject::Full => StudySubject::Expansion(ExpansionTerms::Full),
        Subject::Leading => StudySubject::Expansion(ExpansionTerms::Leading),
    };
    let t = convergence_study(a.tau, qp, &default_test_points(), &ns, subject)?;
    out.table(&Table {
        columns: vec!["n", "shift", "sup_rel_error"],
        rows: t
            .rows
            .iter()
            .map(|r| vec![json!(r.n), json!(r.shift), num(r.sup_rel_error)])
            .collect(),
    })?;
    out.note(&format!("slope {:.6}", t.slope));
    Ok(())
}

fn cmd_sine_limit(a: &SineLimitArgs, out: &mut Output) -> Result<(), CliError> {
    let rows = sine_limit_study(&a.gs, &a.points)?;
    out.table(&Table {
        columns: vec!["g", "sup_abs_error", "form"],
        rows: rows
            .iter()
            .map(|r| vec![num(r.g), num(r.sup_abs_error), json!(format!("{:?}", r.form))])
            .collect(),
    })
}

fn cmd_bounds(a: &BoundsArgs, out: &mut Output) -> Result<(), CliError> {
    let qp = a.coupling.resolve()?;
    let rows = (0..=a.n_max)
        .map(|n| {
            let (maj, meas) = match ScalingParams::new(a.tau, n) {
                Ok(sp) if n >= 1 => (
                    remainder_majorant(&sp, a.u, qp).map(num).unwrap_or(Value::Null),
                    remainder_measured(&sp, a.u, qp).map(num).unwrap_or(Value::Null),
                ),
                _ => (Value::Null, Value::Null),
            };
            vec![
                json!(n),
                num(remainder_r(qp, n)),
                num(remainder_r_bound(qp, n)),
                num(remainder_r_bound_old(qp, n)),
                maj,
                meas,
            ]
        })
        .collect();
    out.table(&Table {
        columns: vec!["n", "R", "bound", "bound_old", "majorant", "measured"],
        rows,
    })
}

fn cmd_expand(a: &ExpandArgs, out: &mut Output) -> Result<(), CliError> {
    let qp = a.coupling.resolve()?;
    let (exact, approx, order) = match a.terms {
        Terms::Weighted => {
            let e = weighted_expansion(a.n, a.u, qp, a.tau)?;
            let (_, w) = sw_scaled_eval(a.n, a.u, even_shift(a.tau, a.n) as f64, qp)?;
            (w, e.weighted, e.order_exponent)
        }
        t => {
            let sp = ScalingParams::new(a.tau, a.n)?;
            let terms = if t == Terms::Full { ExpansionTerms::Full } else { ExpansionTerms::Leading };
            let e = scaled_expansion(&sp, a.u, qp, terms)?;
            let (v, _) = sw_scaled_eval(a.n, a.u, a.tau * a.n as f64, qp)?;
            (v, e.value, e.order_exponent)
        }
    };
    let rel = (exact.div(approx).to_f64() - 1.0).abs();
    let body = json!({
        "exact_sign": exact.sign, "exact_log_abs": exact.log_abs,
        "expansion_sign": approx.sign, "expansion_log_abs": approx.log_abs,
        "rel_error": num(rel), "order_exponent": order,
        "q_power_order": num(qp.q().powf(order)),
    });
    match out.format {
        Format::Json => out.json(&body),
        Format::Csv => out.text(&format!(
            "exact {:.17e}\nexpansion {:.17e}\nrel_error {rel:.3e}\norder_exponent {order}",
            exact.to_f64(),
            approx.to_f64()
        )),
    }
}

fn cmd_partition(a: &PartitionArgs, out: &mut Output) -> Result<(), CliError> {
    let route = a.route.unwrap_or(if a.k.is_some() { Route::Physical } else { Route::Product });
    let (r, g): (PartitionResult, Complex64) = match route {
        Route::Physical => {
            let k = a.k.ok_or_else(|| CliError::Usage("route physical needs --k".into()))?;
            (
                partition_physical(k, a.big_n)?,
                Complex64::new(0.0, 2.0 * std::f64::consts::PI / (k + a.big_n) as f64),
            )
        }
        Route::Product => {
            let g = match (a.k, a.g_re, a.g_im) {
                (Some(k), None, None) => Complex64::new(0.0, 2.0 * std::f64::consts::PI / (k + a.big_n) as f64),
                (None, Some(re), im) => Complex64::new(re, im.unwrap_or(0.0)),
                (None, None, Some(im)) => Complex64::new(0.0, im),
                _ => return Err(CliError::Usage("give either --k or --g-re/--g-im".into())),
            };
            (partition_product(g, a.big_n)?, g)
        }
        Route::Integral => {
            let re = a.g_re.ok_or_else(|| CliError::Usage("route integral needs a real --g-re".into()))?;
            if a.g_im.unwrap_or(0.0) != 0.0 {
                return Err(CliError::Usage("route integral needs real coupling".into()));
            }
            (partition_integral(QParam::from_g(re)?, a.big_n)?, Complex64::new(re, 0.0))
        }
    };
    out.json(&json!({
        "k": a.k, "N": a.big_n, "g_s_re": g.re, "g_s_im": g.im,
        "value_re": num(r.value.re), "value_im": num(r.value.im),
        "log_abs": num(r.log.log_abs),
        "route": r.route.name(), "err": num(r.estimated_error),
    }))
}

fn cmd_sample(a: &SampleArgs, out: &mut Output) -> Result<(), CliError> {
    let qp = a.coupling.resolve()?;
    let g = qp.g();
    let (lo, hi) = a.window.unwrap_or_else(|| default_window(a.big_n, g));
    let samples: Vec<PointSample> = match a.sampler {
        SamplerKind::Projection => {
            let s = ProjectionSampler::new(a.big_n, qp, Grid::uniform(lo, hi, a.grid_size)?)?;
            s.sample_many(a.seed, a.count)
        }
        SamplerKind::Metropolis => {
            let chains = a.chains.max(1);
            let per = a.count.div_ceil(chains);
            let cfg = MetropolisConfig {
                sigma: None,
                burn_in: a.burn_in,
                thin: a.thin,
            };
            let mut v = sample_metropolis_chains(a.big_n, g, a.seed, chains, per, cfg)?;
            v.truncate(a.count);
            v
        }
    };
    match a.hist_bins {
        Some(b) => {
            let r = correlation_check(1, &histogram_cells(lo, hi, b), finite_kernel(a.big_n, qp), &samples)?;
            let s = samples.len() as f64;
            out.table(&Table {
                columns: vec!["bin_lo", "bin_hi", "count", "expected", "se"],
                rows: r
                    .cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        vec![
                            num(c[0].0),
                            num(c[0].1),
                            json!((r.estimate[i] * s).round() as u64),
                            num(r.predicted[i] * s),
                            num(r.std_error[i] * s),
                        ]
                    })
                    .collect(),
            })?;
            out.note(&format!("max z {:.3}", r.max_z()));
            Ok(())
        }
        None => out.table(&Table {
            columns: vec!["seed", "index", "points"],
            rows: samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let pts: Vec<String> = s.points.iter().map(|p| format!("{p:.17e}")).collect();
                    vec![json!(s.seed), json!(i), json!(pts.join(";"))]
                })
                .collect(),
        }),
    }
}

fn cmd_selftest(out: &mut Output) -> Result<(), CliError> {
    let outcomes = thetadpp::acceptance::run_all();
    let mut lines: Vec<String> = outcomes.iter().map(|o| o.line()).collect();
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    lines.push(format!("{}/{} criteria pass", outcomes.len() - failed.len(), outcomes.len()));
    out.text(&lines.join("\n"))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failed criteria: {failed:?}")))
    }
}

/// Appends `--key value` for config entries whose flag is not already on the
/// command line.
fn apply_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path)?;
    let mut out = args.clone();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{path}:{}: expected key=value", ln + 1)))?;
        let flag = format!("--{}", k.trim());
        let present = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if present {
            continue;
        }
        match v.trim() {
            "true" => out.push(flag),
            "false" => {}
            v => out.push(format!("{flag}={v}")),
        }
    }
    Ok(out)
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("THETA_DPP_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("THETA_DPP_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::Usage("THETA_DPP_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run() -> Result<(), CliError> {
    let args = apply_config(std::env::args().collect())?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return Err(match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => return Ok(()),
                _ => CliError::Usage(String::new()),
            });
        }
    };
    configure_threads()?;
    let meta = format!("thetadpp {VERSION} {}", args[1..].join(" "));
    let mut out = Output::open(&cli.out, cli.format, meta)?;
    match &cli.cmd {
        Cmd::Eval(a) => cmd_eval(a, &mut out),
        Cmd::Density(a) => cmd_density(a, &mut out),
        Cmd::KernelGrid(a) => cmd_kernel_grid(a, &mut out),
        Cmd::Converge(a) => cmd_converge(a, &mut out),
        Cmd::SineLimit(a) => cmd_sine_limit(a, &mut out),
        Cmd::Bounds(a) => cmd_bounds(a, &mut out),
        Cmd::Expand(a) => cmd_expand(a, &mut out),
        Cmd::Partition(a) => cmd_partition(a, &mut out),
        Cmd::Sample(a) => cmd_sample(a, &mut out),
        Cmd::Selftest => cmd_selftest(&mut out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) if m.is_empty() => {}
                CliError::Usage(m) => eprintln!("usage error: {m}"),
                CliError::Lib(err) => eprintln!("error: {err}"),
                CliError::Io(err) => eprintln!("I/O error: {err}"),
                CliError::Failed(m) => eprintln!("{m}"),
            }
            ExitCode::from(e.code())
        }
    }
}
