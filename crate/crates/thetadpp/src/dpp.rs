//! Fredholm determinants, exact sampling of the finite-N projection process,
//! a Metropolis chain for the raw φ-space density, and Monte Carlo checks of
//! correlation functions.
//!
//! Everything works in φ-space, `x = e^{φ + Ng}`.

use crate::error::{domain, Error, Result};
use crate::kernels::{kernel_finite_mapped, FiniteForm};
use crate::numeric::{gauss_legendre, signed_log_sum};
use crate::qspecial::QParam;
use crate::swpoly::{sw_log_weight, sw_poly_log};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Default number of uniform nodes for sampling grids.
pub const SAMPLING_NODES: usize = 4096;

/// Allowed `|Σ K(φ_i,φ_i) w_i - N|` before sampling.
pub const TRACE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub window: (f64, f64),
    /// Cell width for uniform midpoint grids, `None` for Gauss rules.
    pub cell: Option<f64>,
}

impl Grid {
    /// `n` cell midpoints of `[lo, hi]`, each with weight `(hi - lo)/n`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        check_window(lo, hi, n)?;
        let h = (hi - lo) / n as f64;
        Ok(Self {
            nodes: (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect(),
            weights: vec![h; n],
            window: (lo, hi),
            cell: Some(h),
        })
    }

    pub fn gauss_legendre(lo: f64, hi: f64, n: usize) -> Result<Self> {
        check_window(lo, hi, n)?;
        let (nodes, weights) = gauss_legendre(n, lo, hi);
        Ok(Self {
            nodes,
            weights,
            window: (lo, hi),
            cell: None,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn check_window(lo: f64, hi: f64, n: usize) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return domain(format!("window [{lo}, {hi}] must be finite and non-empty"));
    }
    if n == 0 {
        return domain("grid needs at least one node");
    }
    Ok(())
}

/// `[-Ng - 8√g, Ng + 8√g]`.
pub fn default_window(n: usize, g: f64) -> (f64, f64) {
    let h = n as f64 * g + 8.0 * g.sqrt();
    (-h, h)
}

/// Mapping `x = e^{φ + Ng}` back from φ-space.
pub fn phi_to_x(phi: f64, n: usize, g: f64) -> f64 {
    (phi + n as f64 * g).exp()
}

/// Finite-N mapped kernel as a closure.
pub fn finite_kernel(n: usize, qp: QParam) -> impl Fn(f64, f64) -> Result<f64> + Sync + Copy {
    move |a, b| kernel_finite_mapped(n, a, b, qp, FiniteForm::Auto).map(|e| e.value)
}

fn kernel_matrix<K>(kernel: &K, nodes: &[f64]) -> Result<DMatrix<f64>>
where
    K: Fn(f64, f64) -> Result<f64> + Sync,
{
    let m = nodes.len();
    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&a| nodes.iter().map(|&b| kernel(a, b)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mat = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel matrix entry".into()));
    }
    Ok(mat)
}

/// `det(I + D^{1/2} K G D^{1/2})` with `K` the kernel on the grid nodes,
/// `G = diag(g)` and `D` the quadrature weights.
pub fn fredholm_det<K>(kernel: K, g: &[f64], grid: &Grid) -> Result<f64>
where
    K: Fn(f64, f64) -> Result<f64> + Sync,
{
    if g.len() != grid.len() {
        return domain(format!("{} test-function values for {} nodes", g.len(), grid.len()));
    }
    let k = kernel_matrix(&kernel, &grid.nodes)?;
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let m = grid.len();
    let a = DMatrix::from_fn(m, m, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        d + sw[i] * k[(i, j)] * g[j] * sw[j]
    });
    let det = a.lu().determinant();
    if !det.is_finite() {
        return Err(Error::NonFinite("Fredholm determinant".into()));
    }
    Ok(det)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    ProjectionDPP,
    Metropolis,
}

/// One configuration in φ-space.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSample {
    pub points: Vec<f64>,
    pub n_points: usize,
    pub seed: u64,
    /// Generator stream (sample index or chain index).
    pub stream: u64,
    pub sampler: Sampler,
}

impl PointSample {
    pub fn x_points(&self, n: usize, g: f64) -> Vec<f64> {
        self.points.iter().map(|&p| phi_to_x(p, n, g)).collect()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Sequential sampler for the rank-N projection kernel restricted to a
/// grid. The orthonormal feature matrix is built once and shared.
#[derive(Clone, Debug)]
pub struct ProjectionSampler {
    n: usize,
    grid: Grid,
    /// Columns orthonormal in the discrete inner product.
    basis: DMatrix<f64>,
    pub trace: f64,
}

impl ProjectionSampler {
    pub fn new(n: usize, qp: QParam, grid: Grid) -> Result<Self> {
        if n == 0 {
            return domain("N must be positive");
        }
        let g = qp.g();
        let s = n as f64 * g;
        let m = grid.len();
        // √(w_i) ψ_j(φ_i), ψ_j(φ) = e^{(φ+Ng)/2} p_j(x) √w(x)
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                grid.nodes
                    .iter()
                    .zip(&grid.weights)
                    .map(|(&phi, &wt)| {
                        let y = phi + s;
                        let p = sw_poly_log(j, y, qp)?;
                        let lnv = p.log_abs + 0.5 * y + 0.5 * sw_log_weight(y, qp) + 0.5 * wt.ln();
                        Ok(p.sign * lnv.exp())
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let v = DMatrix::from_fn(m, n, |i, j| cols[j][i]);
        let trace = v.iter().map(|x| x * x).sum::<f64>();
        if !((trace - n as f64).abs() <= TRACE_TOLERANCE) {
            return Err(Error::GridTooCoarse {
                trace,
                expected: n as f64,
            });
        }
        let basis = v.qr().q();
        Ok(Self { n, grid, basis, trace })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// One configuration of exactly N points.
    pub fn sample(&self, seed: u64, stream: u64) -> PointSample {
        let mut rng = rng_for(seed, stream);
        let mut v = self.basis.clone();
        let mut points = Vec::with_capacity(self.n);
        for k in (1..=self.n).rev() {
            let probs: Vec<f64> = v.row_iter().map(|r| r.norm_squared()).collect();
            let total: f64 = probs.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut idx = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                if u < *p {
                    idx = i;
                    break;
                }
                u -= p;
            }
            let jitter = match self.grid.cell {
                Some(h) => (rng.random::<f64>() - 0.5) * h,
                None => 0.0,
            };
            points.push(self.grid.nodes[idx] + jitter);
            if k == 1 {
                break;
            }
            // project the column space orthogonally to the selected row
            let row = v.row(idx).transpose();
            let piv = row.iamax();
            let col = v.column(piv).clone_owned();
            let rp = row[piv];
            let mut next = DMatrix::zeros(v.nrows(), k - 1);
            let mut c = 0;
            for j in 0..k {
                if j == piv {
                    continue;
                }
                let f = row[j] / rp;
                let newc = v.column(j) - &col * f;
                next.set_column(c, &newc);
                c += 1;
            }
            v = next.qr().q();
        }
        points.sort_by(f64::total_cmp);
        PointSample {
            n_points: points.len(),
            points,
            seed,
            stream,
            sampler: Sampler::ProjectionDPP,
        }
    }

    /// `count` independent configurations, sample `i` on stream `i`.
    pub fn sample_many(&self, seed: u64, count: usize) -> Vec<PointSample> {
        (0..count as u64).into_par_iter().map(|i| self.sample(seed, i)).collect()
    }
}

/// One configuration from a uniform grid of [`SAMPLING_NODES`] nodes over
/// the default window.
pub fn sample_projection_dpp(n: usize, qp: QParam, grid: Option<Grid>, seed: u64) -> Result<PointSample> {
    let grid = match grid {
        Some(g) => g,
        None => default_sampling_grid(n, qp)?,
    };
    Ok(ProjectionSampler::new(n, qp, grid)?.sample(seed, 0))
}

pub fn default_sampling_grid(n: usize, qp: QParam) -> Result<Grid> {
    let (lo, hi) = default_window(n, qp.g());
    Grid::uniform(lo, hi, SAMPLING_NODES)
}

/// Log of the unnormalised φ-space density
/// `∏ e^{-φ_j²/2g} ∏_{j<k} (2 sinh((φ_k - φ_j)/2))²`.
pub fn log_density_tilde(phis: &[f64], g: f64) -> f64 {
    let mut s = 0.0;
    for (j, &a) in phis.iter().enumerate() {
        s -= a * a / (2.0 * g);
        for &b in &phis[j + 1..] {
            let d = (0.5 * (b - a)).abs();
            if d == 0.0 {
                return f64::NEG_INFINITY;
            }
            // ln(2 sinh d)² = 2(d + ln(1 - e^{-2d}))
            s += 2.0 * (d + (-(-2.0 * d).exp()).ln_1p());
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetropolisConfig {
    /// Proposal standard deviation; `None` means `√g`.
    pub sigma: Option<f64>,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for MetropolisConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            burn_in: 1000,
            thin: 10,
        }
    }
}

/// Single-site random-walk Metropolis chain on φ-space. Iterating yields
/// one configuration every `thin` sweeps after `burn_in` sweeps.
#[derive(Clone, Debug)]
pub struct MetropolisChain {
    g: f64,
    sigma: f64,
    thin: usize,
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
    state: Vec<f64>,
    log_p: f64,
    proposed: u64,
    accepted: u64,
}

impl MetropolisChain {
    pub fn new(n: usize, g: f64, seed: u64, stream: u64, cfg: MetropolisConfig) -> Result<Self> {
        if n == 0 || n > 12 {
            return domain(format!("Metropolis sampling supports 1 <= N <= 12, got {n}"));
        }
        if !(g > 0.0 && g.is_finite()) {
            return domain(format!("g_s must be positive, got {g}"));
        }
        let sigma = cfg.sigma.unwrap_or(g.sqrt());
        if !(sigma > 0.0) || cfg.thin == 0 {
            return domain("proposal width and thinning must be positive");
        }
        // equally spaced start inside the bulk
        let state: Vec<f64> = (0..n)
            .map(|j| (j as f64 - 0.5 * (n as f64 - 1.0)) * g.max(0.1))
            .collect();
        let log_p = log_density_tilde(&state, g);
        let mut c = Self {
            g,
            sigma,
            thin: cfg.thin,
            seed,
            stream,
            rng: rng_for(seed, stream),
            state,
            log_p,
            proposed: 0,
            accepted: 0,
        };
        for _ in 0..cfg.burn_in {
            c.sweep();
        }
        Ok(c)
    }

    fn sweep(&mut self) {
        for j in 0..self.state.len() {
            let z: f64 = self.rng.sample(StandardNormal);
            let old = self.state[j];
            self.state[j] = old + self.sigma * z;
            let lp = log_density_tilde(&self.state, self.g);
            let u: f64 = self.rng.random();
            self.proposed += 1;
            if u.ln() < lp - self.log_p {
                self.log_p = lp;
                self.accepted += 1;
            } else {
                self.state[j] = old;
            }
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }
}

impl Iterator for MetropolisChain {
    type Item = PointSample;

    fn next(&mut self) -> Option<PointSample> {
        for _ in 0..self.thin {
            self.sweep();
        }
        let mut points = self.state.clone();
        points.sort_by(f64::total_cmp);
        Some(PointSample {
            n_points: points.len(),
            points,
            seed: self.seed,
            stream: self.stream,
            sampler: Sampler::Metropolis,
        })
    }
}

/// Chain on stream 0 with the given settings.
pub fn sample_metropolis(n: usize, g: f64, seed: u64, cfg: MetropolisConfig) -> Result<MetropolisChain> {
    MetropolisChain::new(n, g, seed, 0, cfg)
}

/// `chains` independent chains run concurrently, chain `c` on stream `c`,
/// each contributing `per_chain` samples; output is ordered by chain.
pub fn sample_metropolis_chains(
    n: usize,
    g: f64,
    seed: u64,
    chains: usize,
    per_chain: usize,
    cfg: MetropolisConfig,
) -> Result<Vec<PointSample>> {
    let runs: Vec<Vec<PointSample>> = (0..chains as u64)
        .into_par_iter()
        .map(|c| Ok(MetropolisChain::new(n, g, seed, c, cfg)?.take(per_chain).collect()))
        .collect::<Result<_>>()?;
    Ok(runs.into_iter().flatten().collect())
}

/// A product cell `I_1 × … × I_k` for the k-point function.
pub type Cell = Vec<(f64, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    pub order: usize,
    pub cells: Vec<Cell>,
    /// `∫_cell det[K(φ_i,φ_j)]`.
    pub predicted: Vec<f64>,
    /// Mean number of ordered distinct k-tuples per sample in the cell.
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub samples: usize,
}

impl CorrelationReport {
    /// Largest `|estimate - predicted| / se` over cells.
    pub fn max_z(&self) -> f64 {
        self.predicted
            .iter()
            .zip(&self.estimate)
            .zip(&self.std_error)
            .map(|((p, e), s)| (e - p).abs() / s)
            .fold(0.0, f64::max)
    }
}

fn det_small(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().lu().determinant(),
    }
}

/// `det[K(φ_i, φ_j)]_{i,j ≤ k}` at one point.
pub fn correlation_function<K>(kernel: &K, pts: &[f64]) -> Result<f64>
where
    K: Fn(f64, f64) -> Result<f64>,
{
    let k = pts.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = kernel(pts[i], pts[j])?;
        }
    }
    Ok(det_small(&m))
}

const CELL_NODES: usize = 8;
const SE_BATCHES: usize = 20;

fn cell_integral<K>(kernel: &K, cell: &Cell) -> Result<f64>
where
    K: Fn(f64, f64) -> Result<f64>,
{
    let rules: Vec<(Vec<f64>, Vec<f64>)> = cell.iter().map(|&(a, b)| gauss_legendre(CELL_NODES, a, b)).collect();
    let k = cell.len();
    let mut idx = vec![0usize; k];
    let mut terms = Vec::new();
    loop {
        let pts: Vec<f64> = (0..k).map(|d| rules[d].0[idx[d]]).collect();
        let w: f64 = (0..k).map(|d| rules[d].1[idx[d]]).product();
        terms.push(crate::numeric::LogValue::from_f64(w * correlation_function(kernel, &pts)?));
        let mut d = 0;
        loop {
            if d == k {
                return Ok(signed_log_sum(&terms).to_f64());
            }
            idx[d] += 1;
            if idx[d] < CELL_NODES {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn tuples_in_cell(points: &[f64], cell: &Cell) -> f64 {
    fn rec(points: &[f64], cell: &Cell, used: &mut Vec<usize>) -> usize {
        let d = used.len();
        if d == cell.len() {
            return 1;
        }
        let (a, b) = cell[d];
        let mut c = 0;
        for (i, &p) in points.iter().enumerate() {
            if p >= a && p < b && !used.contains(&i) {
                used.push(i);
                c += rec(points, cell, used);
                used.pop();
            }
        }
        c
    }
    rec(points, cell, &mut Vec::new()) as f64
}

/// Compares binned factorial-moment estimates of the k-point correlation
/// with `∫_cell det[K]`. The standard error is the larger of the i.i.d.
/// estimate and a batch-means estimate over consecutive samples, so
/// correlated chains are covered too. Few samples give wide error bars, not
/// an error.
pub fn correlation_check<K>(order: usize, cells: &[Cell], kernel: K, samples: &[PointSample]) -> Result<CorrelationReport>
where
    K: Fn(f64, f64) -> Result<f64> + Sync,
{
    if order == 0 || order > 3 {
        return domain(format!("correlation order must be 1, 2 or 3, got {order}"));
    }
    if cells.iter().any(|c| c.len() != order) {
        return domain("every cell needs one interval per order");
    }
    if samples.is_empty() {
        return domain("no samples");
    }
    let s = samples.len() as f64;
    let predicted: Vec<f64> = cells.par_iter().map(|c| cell_integral(&kernel, c)).collect::<Result<_>>()?;
    let per_cell: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|c| {
            let counts: Vec<f64> = samples.iter().map(|smp| tuples_in_cell(&smp.points, c)).collect();
            let mean = counts.iter().sum::<f64>() / s;
            let var = counts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s - 1.0).max(1.0);
            let mut se2 = var / s;
            let b = SE_BATCHES.min(samples.len());
            let len = samples.len() / b;
            if b >= 2 && len >= 1 {
                let bm: Vec<f64> = (0..b)
                    .map(|i| counts[i * len..(i + 1) * len].iter().sum::<f64>() / len as f64)
                    .collect();
                let m = bm.iter().sum::<f64>() / b as f64;
                let bv = bm.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b as f64 - 1.0);
                se2 = se2.max(bv / b as f64);
            }
            (mean, se2.sqrt())
        })
        .collect();
    let (estimate, mut std_error): (Vec<f64>, Vec<f64>) = per_cell.into_iter().unzip();
    // a cell with no hits still has the counting uncertainty of its prediction
    for (se, p) in std_error.iter_mut().zip(&predicted) {
        *se = se.max((p.abs() / s).sqrt());
    }
    Ok(CorrelationReport {
        order,
        cells: cells.to_vec(),
        predicted,
        estimate,
        std_error,
        samples: samples.len(),
    })
}

/// `bins` equal one-dimensional cells over `[lo, hi]`.
pub fn histogram_cells(lo: f64, hi: f64, bins: usize) -> Vec<Cell> {
    let h = (hi - lo) / bins as f64;
    (0..bins).map(|i| vec![(lo + i as f64 * h, lo + (i + 1) as f64 * h)]).collect()
}

/// Monte Carlo estimate of `E[exp Σ f(X_k)]` with its standard error.
pub fn mgf_monte_carlo<F: Fn(f64) -> f64>(samples: &[PointSample], f: F) -> (f64, f64) {
    let vals: Vec<f64> = samples.iter().map(|s| s.points.iter().map(|&p| f(p)).sum::<f64>().exp()).collect();
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (v / n).sqrt())
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> f64 {
    let mut xs = data.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_sum() {
        let g = Grid::uniform(-3.0, 5.0, 1000).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 8.0).abs() < 1e-12);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn log_density_permutation_invariant() {
        let a = log_density_tilde(&[0.3, -1.2, 2.0], 0.7);
        let b = log_density_tilde(&[2.0, 0.3, -1.2], 0.7);
        assert!((a - b).abs() < 1e-14 * a.abs());
        assert_eq!(log_density_tilde(&[0.5, 0.5], 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn tuple_counting() {
        let pts = [0.1, 0.2, 0.9];
        assert_eq!(tuples_in_cell(&pts, &vec![(0.0, 0.5), (0.0, 0.5)]), 2.0);
        assert_eq!(tuples_in_cell(&pts, &vec![(0.0, 0.5), (0.5, 1.0)]), 2.0);
        assert_eq!(tuples_in_cell(&pts, &vec![(0.0, 1.0)]), 3.0);
    }
}
