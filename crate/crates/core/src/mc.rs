//! Seeded Monte Carlo path ensembles.
//!
//! Path `k` draws from its own ChaCha8 stream `(seed, k)`, so adding paths
//! never changes existing ones and results do not depend on the number of
//! threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dupire::LocalVolSurface;
use crate::error::{Error, Result};
use crate::measures::GridMeasure;
use crate::numerics::{check_finite, check_strictly_increasing, Matrix};
use crate::transport::MartingaleKernel;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Generator identifier for [`simulate_localvol`].
pub const EULER_GENERATOR: &str = "chacha8-euler-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    times: Vec<f64>,
    /// `n_paths × n_times`.
    paths: Matrix,
    seed: u64,
    generator_id: String,
}

impl PathEnsemble {
    pub fn new(times: Vec<f64>, paths: Matrix, seed: u64, generator_id: impl Into<String>) -> Result<Self> {
        check_strictly_increasing(&times, "times")?;
        if paths.rows() == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if paths.cols() != times.len() {
            return Err(Error::invalid(format!(
                "paths have {} columns for {} times",
                paths.cols(),
                times.len()
            )));
        }
        check_finite(paths.as_slice(), "paths")?;
        Ok(Self {
            times,
            paths,
            seed,
            generator_id: generator_id.into(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn paths(&self) -> &Matrix {
        &self.paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generator_id(&self) -> &str {
        &self.generator_id
    }

    pub fn n_paths(&self) -> usize {
        self.paths.rows()
    }

    pub fn path(&self, k: usize) -> &[f64] {
        self.paths.row(k)
    }

    /// Index of `t` in the time grid (relative tolerance 1e-9).
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .ok_or(Error::TimeNotOnGrid { t })
    }

    /// States at time index `i` across all paths.
    pub fn states(&self, i: usize) -> Vec<f64> {
        self.paths.column(i)
    }

    pub fn states_at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.states(self.time_index(t)?))
    }
}

/// Independent stream for path `path` under `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Fills an ensemble in parallel. `fill(rng, row)` writes one path; the
/// row is already sized to the time grid.
pub fn simulate_paths<F>(times: Vec<f64>, n_paths: usize, seed: u64, generator_id: &str, fill: F) -> Result<PathEnsemble>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    if n_paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let cols = times.len();
    let mut data = vec![0.0; n_paths * cols];
    data.par_chunks_mut(cols).enumerate().for_each(|(k, row)| {
        let mut rng = path_rng(seed, k as u64);
        fill(&mut rng, row);
    });
    PathEnsemble::new(times, Matrix::from_vec(n_paths, cols, data)?, seed, generator_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Point(f64),
    /// Sampled by inverse distribution function.
    Measure(GridMeasure),
}

/// Inverse-CDF sampler for a grid measure.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn new(m: &GridMeasure) -> Self {
        Self {
            grid: m.grid().to_vec(),
            cdf: m.cdf_values(),
        }
    }

    pub fn sample(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u).min(self.grid.len() - 1);
        self.grid[k]
    }
}

/// Euler–Maruyama paths of `dX = σ(t, X) dW` (or `σ X dW`) on the time
/// grid of `lv`, with `steps_per_interval` substeps between grid times.
pub fn simulate_localvol(
    lv: &LocalVolSurface,
    init: &Initial,
    n_paths: usize,
    steps_per_interval: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if steps_per_interval == 0 {
        return Err(Error::invalid("steps_per_interval must be positive"));
    }
    let sampler = match init {
        Initial::Point(x) if !x.is_finite() => return Err(Error::invalid("initial point must be finite")),
        Initial::Point(_) => None,
        Initial::Measure(m) => Some(InverseCdf::new(m)),
    };
    let times = lv.times().to_vec();
    simulate_paths(times.clone(), n_paths, seed, EULER_GENERATOR, |rng, row| {
        let mut x = match (init, &sampler) {
            (Initial::Point(x), _) => *x,
            (_, Some(s)) => s.sample(rng.random::<f64>()),
            _ => unreachable!(),
        };
        row[0] = x;
        for k in 1..times.len() {
            let dt = (times[k] - times[k - 1]) / steps_per_interval as f64;
            let sdt = dt.sqrt();
            for s in 0..steps_per_interval {
                let t = times[k - 1] + s as f64 * dt;
                let z: f64 = rng.sample(StandardNormal);
                x += lv.diffusion(t, x) * sdt * z;
            }
            row[k] = x;
        }
    })
}

/// Empirical law of the states at time `t`.
pub fn empirical_marginal(ens: &PathEnsemble, t: f64) -> Result<GridMeasure> {
    GridMeasure::from_samples(&ens.states_at(t)?)
}

/// Sample mean with a 95% normal confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
    pub std: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Option<Self> {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for x in xs {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        if n == 0 {
            return None;
        }
        let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(Self {
            mean,
            ci95: Z95 * std / (n as f64).sqrt(),
            std,
            n,
        })
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.mean - v).abs() <= self.ci95
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        let se = self.std_error().hypot(other.std_error());
        Estimate {
            mean: self.mean - other.mean,
            ci95: Z95 * se,
            std: se * ((self.n.min(other.n)) as f64).sqrt(),
            n: self.n.min(other.n),
        }
    }
}

/// `E[X_t − X_s]` across paths.
pub fn increment_mean(ens: &PathEnsemble, s: usize, t: usize) -> Estimate {
    let p = ens.paths();
    Estimate::from_samples((0..ens.n_paths()).map(|k| p.get(k, t) - p.get(k, s))).expect("ensembles are nonempty")
}

/// `E[(X_T − strike)₊ | X_t ∈ [z − bandwidth, z + bandwidth]]` where `T`
/// is the last grid time. `bandwidth = 0` conditions on `X_t = z` exactly.
pub fn conditional_price(ens: &PathEnsemble, t: f64, strike: f64, z: f64, bandwidth: f64) -> Result<Estimate> {
    let i = ens.time_index(t)?;
    let last = ens.times().len() - 1;
    if i >= last {
        return Err(Error::invalid(format!("conditioning time {t} must precede the horizon")));
    }
    if !(bandwidth >= 0.0) {
        return Err(Error::invalid("bandwidth must be nonnegative"));
    }
    let p = ens.paths();
    let payoffs = (0..ens.n_paths())
        .filter(|&k| {
            let x = p.get(k, i);
            if bandwidth == 0.0 {
                x == z
            } else {
                (x - z).abs() <= bandwidth
            }
        })
        .map(|k| (p.get(k, last) - strike).max(0.0));
    Estimate::from_samples(payoffs).ok_or(Error::EmptyWindow { z, bandwidth })
}

/// Expected W₁ between a measure and an `n`-sample empirical measure, up to
/// a constant: `∫ √(F(1 − F)) dx / √n`.
pub fn w1_sampling_band(m: &GridMeasure, n: usize) -> f64 {
    let cdf = m.cdf_values();
    let integral: f64 = m
        .grid()
        .windows(2)
        .zip(&cdf)
        .map(|(x, &f)| (f * (1.0 - f)).max(0.0).sqrt() * (x[1] - x[0]))
        .sum();
    integral / (n as f64).sqrt()
}

/// How source states are grouped for [`empirical_kernel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBinning {
    pub bins: usize,
    /// Source range binned; samples outside are dropped. Defaults to the
    /// observed range of the non-atomic states.
    pub range: Option<(f64, f64)>,
    /// Rows with fewer samples are flagged.
    pub min_count: usize,
}

impl KernelBinning {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            range: None,
            min_count: 30,
        }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = Some((lo, hi));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalKernel {
    /// Rows ordered by source state; source weights are sample fractions.
    pub kernel: MartingaleKernel,
    pub counts: Vec<usize>,
    /// Row is a single repeated source state rather than a bin.
    pub is_atom: Vec<bool>,
    pub flagged: Vec<bool>,
}

/// Source values shared by more than `max(ln n, 1)` paths.
pub fn detect_atoms(states: &[f64]) -> Vec<(f64, usize)> {
    let threshold = (states.len() as f64).ln().max(1.0);
    let mut sorted = states.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut atoms = Vec::new();
    let mut k = 0;
    while k < sorted.len() {
        let mut e = k;
        while e < sorted.len() && sorted[e] == sorted[k] {
            e += 1;
        }
        if (e - k) as f64 > threshold {
            atoms.push((sorted[k], e - k));
        }
        k = e;
    }
    atoms
}

/// Conditional empirical law of `X_t` given `X_s`: one row per atom of
/// `X_s` and one per nonempty equal-width bin of the remaining states. A
/// bin row sits at the bin's mean source state.
pub fn empirical_kernel(ens: &PathEnsemble, s: f64, t: f64, binning: &KernelBinning) -> Result<EmpiricalKernel> {
    let (i, j) = (ens.time_index(s)?, ens.time_index(t)?);
    if i >= j {
        return Err(Error::invalid(format!("need s < t, got {s} and {t}")));
    }
    if binning.bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    let xs = ens.states(i);
    let ys = ens.states(j);
    let atoms = detect_atoms(&xs);
    let is_atom_value = |x: f64| atoms.binary_search_by(|a| a.0.total_cmp(&x)).is_ok();
    let (lo, hi) = match binning.range {
        Some(r) => r,
        None => xs
            .iter()
            .filter(|&&x| !is_atom_value(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))),
    };

    struct Group {
        source_sum: f64,
        targets: Vec<f64>,
        atom: Option<f64>,
    }
    let mut groups: Vec<Group> = (0..binning.bins)
        .map(|_| Group {
            source_sum: 0.0,
            targets: Vec::new(),
            atom: None,
        })
        .collect();
    let mut atom_groups: Vec<Group> = atoms
        .iter()
        .map(|&(a, _)| Group {
            source_sum: 0.0,
            targets: Vec::new(),
            atom: Some(a),
        })
        .collect();
    let width = (hi - lo) / binning.bins as f64;
    for (&x, &y) in xs.iter().zip(&ys) {
        if let Ok(a) = atoms.binary_search_by(|a| a.0.total_cmp(&x)) {
            if binning.range.is_none() || (x >= lo && x <= hi) {
                atom_groups[a].source_sum += x;
                atom_groups[a].targets.push(y);
            }
            continue;
        }
        if !(x >= lo && x <= hi) {
            continue;
        }
        let b = if width > 0.0 {
            (((x - lo) / width) as usize).min(binning.bins - 1)
        } else {
            0
        };
        groups[b].source_sum += x;
        groups[b].targets.push(y);
    }
    let mut all: Vec<Group> = groups.into_iter().chain(atom_groups).filter(|g| !g.targets.is_empty()).collect();
    if all.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let source_of = |g: &Group| g.atom.unwrap_or(g.source_sum / g.targets.len() as f64);
    all.sort_by(|a, b| source_of(a).total_cmp(&source_of(b)));
    let total: usize = all.iter().map(|g| g.targets.len()).sum();
    let mut source = Vec::with_capacity(all.len());
    let mut rows = Vec::with_capacity(all.len());
    let mut counts = Vec::with_capacity(all.len());
    let mut is_atom = Vec::with_capacity(all.len());
    for g in &all {
        let x = source_of(g);
        // a bin mean can coincide with an atom or another bin's mean only
        // in degenerate samples; keep the source grid strictly increasing
        if source.last().is_some_and(|&p: &f64| x <= p) {
            return Err(Error::invalid(format!("coincident kernel rows at source {x}")));
        }
        source.push(x);
        rows.push(GridMeasure::from_samples(&g.targets)?);
        counts.push(g.targets.len());
        is_atom.push(g.atom.is_some());
    }
    let flagged = counts.iter().map(|&c| c < binning.min_count).collect();
    let weights = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(EmpiricalKernel {
        kernel: MartingaleKernel::new(source, rows, Some(weights))?,
        counts,
        is_atom,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::call_surface::Convention;
    use crate::measures::w1_distance;
    use crate::numerics::linspace;

    fn brownian(n: usize, seed: u64) -> PathEnsemble {
        let lv = LocalVolSurface::constant(linspace(0.0, 1.0, 11), vec![0.0], 1.0, Convention::Additive).unwrap();
        simulate_localvol(&lv, &Initial::Point(0.0), n, 4, seed).unwrap()
    }

    #[test]
    fn zero_vol_paths_are_constant() {
        let lv = LocalVolSurface::constant(linspace(0.0, 1.0, 5), vec![0.0], 0.0, Convention::Additive).unwrap();
        let ens = simulate_localvol(&lv, &Initial::Point(2.0), 100, 3, 1).unwrap();
        assert!(ens.paths().as_slice().iter().all(|&x| x == 2.0));
        let m = empirical_marginal(&ens, 1.0).unwrap();
        assert_eq!(m.grid(), &[2.0]);
    }

    #[test]
    fn brownian_variance_mean_and_marginal() {
        let n = 100_000;
        let ens = brownian(n, 7);
        let x1 = ens.states_at(1.0).unwrap();
        let est = Estimate::from_samples(x1.iter().copied()).unwrap();
        let var = est.std * est.std;
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "var {var}");
        assert!(est.mean.abs() < 3.0 * est.std / (n as f64).sqrt());
        let m = empirical_marginal(&ens, 1.0).unwrap();
        let exact = GridMeasure::gaussian(0.0, 1.0, linspace(-8.0, 8.0, 4001)).unwrap();
        assert!(w1_distance(&m, &exact) < 0.01);
        for s in 0..ens.times().len() {
            for t in s + 1..ens.times().len() {
                let inc = increment_mean(&ens, s, t);
                assert!(inc.mean.abs() < 4.0 * inc.std_error());
            }
        }
    }

    #[test]
    fn determinism_and_stream_independence() {
        let a = brownian(1000, 42);
        let b = brownian(1000, 42);
        assert_eq!(a, b);
        let c = brownian(1500, 42);
        for k in 0..1000 {
            assert_eq!(a.path(k), c.path(k));
        }
        assert_ne!(brownian(10, 43).path(0), a.path(0));
    }

    #[test]
    fn measure_initial_condition() {
        let grid = linspace(-2.0, 2.0, 41);
        let m = GridMeasure::gaussian(0.3, 0.5, grid).unwrap();
        let lv = LocalVolSurface::constant(vec![0.0, 1.0], vec![0.0], 0.0, Convention::Additive).unwrap();
        let ens = simulate_localvol(&lv, &Initial::Measure(m.clone()), 50_000, 1, 3).unwrap();
        let e = empirical_marginal(&ens, 0.0).unwrap();
        assert!(w1_distance(&e, &m) < 0.02);
    }

    #[test]
    fn conditional_prices() {
        let ens = brownian(100_000, 11);
        let p = conditional_price(&ens, 0.5, 100.0, 0.0, 0.5).unwrap();
        assert_eq!(p.mean, 0.0);
        // E[(x + W_½)₊] averaged over x uniform-ish near 0; narrow window
        let p = conditional_price(&ens, 0.5, 0.0, 0.0, 0.02).unwrap();
        let oracle = (0.5 / (2.0 * std::f64::consts::PI)).sqrt();
        assert!((p.mean - oracle).abs() < p.ci95 + 0.01, "{p:?} vs {oracle}");
        assert!(matches!(conditional_price(&ens, 0.5, 0.0, 50.0, 0.1), Err(Error::EmptyWindow { .. })));
        assert!(conditional_price(&ens, 1.0, 0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn kernels_from_brownian_and_static_ensembles() {
        let ens = brownian(100_000, 5);
        let k = empirical_kernel(&ens, 0.5, 1.0, &KernelBinning::new(20).with_range(-1.5, 1.5)).unwrap();
        assert!(k.is_atom.iter().all(|a| !a));
        for (r, (x, row)) in k.kernel.source().iter().zip(k.kernel.rows()).enumerate() {
            if k.flagged[r] {
                continue;
            }
            let oracle = GridMeasure::gaussian(*x, 0.5f64.sqrt(), linspace(x - 6.0, x + 6.0, 2401)).unwrap();
            assert!(w1_distance(row, &oracle) < 0.02 + 3.0 * w1_sampling_band(&oracle, k.counts[r]));
            let se = 0.5f64.sqrt() / (k.counts[r] as f64).sqrt();
            assert!((row.mean() - x).abs() < 4.0 * se);
        }

        let lv = LocalVolSurface::constant(vec![0.0, 1.0], vec![0.0], 0.0, Convention::Additive).unwrap();
        let grid = linspace(-1.0, 1.0, 5);
        let init = Initial::Measure(GridMeasure::new(grid.clone(), vec![0.2; 5]).unwrap());
        let ens = simulate_localvol(&lv, &init, 1000, 1, 9).unwrap();
        let k = empirical_kernel(&ens, 0.0, 1.0, &KernelBinning::new(4)).unwrap();
        assert!(k.is_atom.iter().all(|&a| a));
        for (x, row) in k.kernel.source().iter().zip(k.kernel.rows()) {
            assert_eq!(row.grid(), &[*x]);
        }
    }

    #[test]
    fn sampling_band_scales() {
        let m = GridMeasure::gaussian(0.0, 1.0, linspace(-8.0, 8.0, 1601)).unwrap();
        let b = w1_sampling_band(&m, 1);
        // ∫ √(Φ(1 − Φ)) for the standard normal
        assert!((b - 1.614_744).abs() < 1e-3, "{b}");
        assert!((w1_sampling_band(&m, 100) - b / 10.0).abs() < 1e-12);
    }
}
