//! Probability measures on finite real grids.
//!
//! A [`GridMeasure`] is purely atomic. Densities are carried as
//! `weight = density × cell width` on trapezoidal cells (half cells at the
//! two ends), so one representation serves both the atomic gallery
//! processes and the PDE marginals.
//!
//! Distances and orders are computed exactly on the merged grid of the two
//! measures wherever the step structure allows it: the 1-Wasserstein
//! distance is `∫|F_m − F_n|`, convex order is pointwise ordering of call
//! functions (piecewise linear with kinks on the atoms), first-order
//! dominance is pointwise ordering of CDFs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cell_widths, check_finite, check_strictly_increasing, compensated_sum};
use crate::numerics::{fd_weights, normal_pdf, stencil_window};

/// Tolerance on the total mass of a measure.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Call-dominance violations below this are ignored by [`check_convex_order`].
pub const CALL_DOMINANCE_TOLERANCE: f64 = 1e-10;
/// Relative tolerance for equal means: `|m1 − m2| ≤ 1e-8 (1 + |m1|)`.
pub const MEAN_TOLERANCE: f64 = 1e-8;
/// CDF violations below this are ignored by [`check_first_order_dominance`].
pub const CDF_TOLERANCE: f64 = 1e-12;
/// Default number of uniform probability levels for [`wp_distance`].
pub const DEFAULT_QUANTILE_LEVELS: usize = 4096;

/// A probability measure with atoms on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    grid: Vec<f64>,
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl GridMeasure {
    /// Builds a measure, checking every invariant. Weights must already
    /// sum to one within [`MASS_TOLERANCE`].
    pub fn new(grid: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::validate_parts(&grid, &weights)?;
        let sum = compensated_sum(weights.iter().copied());
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self {
            grid,
            weights,
            label: None,
        })
    }

    /// Builds a measure from nonnegative weights with positive total,
    /// rescaling them to unit mass.
    pub fn normalized(grid: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        Self::validate_parts(&grid, &weights)?;
        let sum = compensated_sum(weights.iter().copied());
        if !(sum > 0.0) {
            return Err(Error::NotNormalized { sum });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Self::new(grid, weights)
    }

    fn validate_parts(grid: &[f64], weights: &[f64]) -> Result<()> {
        if grid.len() != weights.len() {
            return Err(Error::InvalidGrid(format!(
                "grid has {} points but {} weights",
                grid.len(),
                weights.len()
            )));
        }
        check_strictly_increasing(grid, "grid")?;
        check_finite(weights, "weights")?;
        if let Some(i) = weights.iter().position(|&w| w < 0.0) {
            return Err(Error::InvalidGrid(format!("negative weight {} at index {i}", weights[i])));
        }
        Ok(())
    }

    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        Self {
            grid: vec![x],
            weights: vec![1.0],
            label: None,
        }
    }

    /// Discretizes a density on `grid` with trapezoidal cells and
    /// renormalizes.
    pub fn from_density(grid: Vec<f64>, density: impl Fn(f64) -> f64) -> Result<Self> {
        check_strictly_increasing(&grid, "grid")?;
        let widths = cell_widths(&grid);
        let weights = grid.iter().zip(&widths).map(|(&x, &v)| density(x) * v).collect();
        Self::normalized(grid, weights)
    }

    /// Gaussian `N(mean, sd²)` discretized on `grid`.
    pub fn gaussian(mean: f64, sd: f64, grid: Vec<f64>) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::invalid(format!("standard deviation must be positive, got {sd}")));
        }
        Self::from_density(grid, |x| normal_pdf((x - mean) / sd) / sd)
    }

    /// Empirical measure of a sample: atoms at the distinct values with
    /// weight proportional to multiplicity.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        check_finite(samples, "samples")?;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut grid = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for x in sorted {
            if grid.last() == Some(&x) {
                *counts.last_mut().unwrap() += 1;
            } else {
                grid.push(x);
                counts.push(1);
            }
        }
        let n = samples.len() as f64;
        Self::normalized(grid, counts.into_iter().map(|c| c as f64 / n).collect())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Drops zero-weight atoms.
    pub fn compact(&self) -> Self {
        let (grid, weights) = self
            .grid
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| (x, w))
            .unzip();
        Self {
            grid,
            weights,
            label: self.label.clone(),
        }
    }

    /// Smallest and largest atoms carrying positive mass.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.grid.iter().zip(&self.weights).find(|(_, &w)| w > 0.0);
        let hi = self.grid.iter().zip(&self.weights).rev().find(|(_, &w)| w > 0.0);
        match (lo, hi) {
            (Some((&a, _)), Some((&b, _))) => (a, b),
            _ => (self.grid[0], self.grid[self.grid.len() - 1]),
        }
    }

    /// Trapezoidal cell widths of the grid.
    pub fn cell_widths(&self) -> Vec<f64> {
        cell_widths(&self.grid)
    }

    /// Density values `weight / cell width`.
    pub fn densities(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(self.cell_widths())
            .map(|(w, v)| w / v)
            .collect()
    }

    /// Right-continuous distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= x);
        self.weights[..k].iter().sum::<f64>().min(1.0)
    }

    /// Cumulative weights at each grid point.
    pub fn cdf_values(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights
            .iter()
            .map(|w| {
                acc += w;
                acc.min(1.0)
            })
            .collect()
    }

    /// `Σ wᵢ (xᵢ − center)^order`.
    pub fn moment(&self, order: i32, center: f64) -> f64 {
        compensated_sum(
            self.grid
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| w * (x - center).powi(order)),
        )
    }

    pub fn mean(&self) -> f64 {
        self.moment(1, 0.0)
    }

    pub fn variance(&self) -> f64 {
        self.moment(2, self.mean())
    }

    /// Call function `Σ wᵢ (xᵢ − strike)₊`.
    pub fn call(&self, strike: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= strike);
        compensated_sum(
            self.grid[k..]
                .iter()
                .zip(&self.weights[k..])
                .map(|(x, w)| w * (x - strike)),
        )
    }

    /// Left-continuous quantile `inf{x : F(x) ≥ u}`.
    pub fn quantile(&self, u: f64) -> f64 {
        let cdf = self.cdf_values();
        let k = cdf.partition_point(|&c| c < u).min(self.grid.len() - 1);
        self.grid[k]
    }

    /// Shifts every atom by `c`.
    pub fn translate(&self, c: f64) -> Self {
        Self {
            grid: self.grid.iter().map(|x| x + c).collect(),
            weights: self.weights.clone(),
            label: self.label.clone(),
        }
    }

    /// Expectation of `f`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        compensated_sum(self.grid.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)))
    }
}

/// `moment(m, order, center)`.
pub fn moment(m: &GridMeasure, order: i32, center: f64) -> f64 {
    m.moment(order, center)
}

/// `call_function(m, strike) = E_m[(X − strike)₊]`.
pub fn call_function(m: &GridMeasure, strike: f64) -> f64 {
    m.call(strike)
}

/// Sorted union of two grids.
pub fn merged_grid(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(&x), Some(&y)) if y < x => {
                j += 1;
                y
            }
            (Some(&x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Values of both CDFs at every point of the merged grid.
fn merged_cdfs(m: &GridMeasure, n: &GridMeasure) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let z = merged_grid(&m.grid, &n.grid);
    let mut fm = Vec::with_capacity(z.len());
    let mut fn_ = Vec::with_capacity(z.len());
    let (mut i, mut j) = (0, 0);
    let (mut am, mut an) = (0.0, 0.0);
    for &x in &z {
        while i < m.grid.len() && m.grid[i] <= x {
            am += m.weights[i];
            i += 1;
        }
        while j < n.grid.len() && n.grid[j] <= x {
            an += n.weights[j];
            j += 1;
        }
        fm.push(am);
        fn_.push(an);
    }
    (z, fm, fn_)
}

/// 1-Wasserstein distance, exact for atomic measures: `∫ |F_m − F_n| dx`
/// evaluated on the merged grid.
pub fn w1_distance(m: &GridMeasure, n: &GridMeasure) -> f64 {
    let (z, fm, fn_) = merged_cdfs(m, n);
    compensated_sum(
        z.windows(2)
            .enumerate()
            .map(|(k, w)| (fm[k] - fn_[k]).abs() * (w[1] - w[0])),
    )
}

/// How quantile functions are evaluated by [`wp_distance_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMode {
    /// Exact step quantile of the atomic measure.
    Step,
    /// Each weight spread uniformly over its trapezoidal cell; the
    /// quantile is then piecewise linear. Appropriate for measures that
    /// discretize a density.
    Cells,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpOptions {
    pub levels: usize,
    pub mode: QuantileMode,
}

impl Default for WpOptions {
    fn default() -> Self {
        Self {
            levels: DEFAULT_QUANTILE_LEVELS,
            mode: QuantileMode::Step,
        }
    }
}

/// Quantiles at the increasing probability levels `us`.
fn quantiles_at(m: &GridMeasure, us: &[f64], mode: QuantileMode) -> Vec<f64> {
    let cdf = m.cdf_values();
    let n = m.grid.len();
    let mut out = Vec::with_capacity(us.len());
    let mut k = 0;
    match mode {
        QuantileMode::Step => {
            for &u in us {
                while k < n - 1 && cdf[k] < u {
                    k += 1;
                }
                out.push(m.grid[k]);
            }
        }
        QuantileMode::Cells => {
            let widths = m.cell_widths();
            // left edge of cell i
            let left: Vec<f64> = (0..n)
                .map(|i| if i == 0 { m.grid[0] } else { 0.5 * (m.grid[i - 1] + m.grid[i]) })
                .collect();
            for &u in us {
                while k < n - 1 && cdf[k] < u {
                    k += 1;
                }
                let below = if k == 0 { 0.0 } else { cdf[k - 1] };
                let w = m.weights[k];
                let x = if n == 1 {
                    m.grid[0]
                } else if w > 0.0 {
                    left[k] + widths[k] * ((u - below) / w).clamp(0.0, 1.0)
                } else {
                    left[k]
                };
                out.push(x);
            }
        }
    }
    out
}

/// `W_p` distance from quantile functions on [`DEFAULT_QUANTILE_LEVELS`]
/// uniform probability levels (step quantiles).
pub fn wp_distance(m: &GridMeasure, n: &GridMeasure, p: f64) -> Result<f64> {
    wp_distance_with(m, n, p, &WpOptions::default())
}

/// `W_p` distance: `(1/N Σ_k |Q_m(u_k) − Q_n(u_k)|^p)^{1/p}` with midpoint
/// levels `u_k = (k + ½)/N`.
pub fn wp_distance_with(m: &GridMeasure, n: &GridMeasure, p: f64, opts: &WpOptions) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("Wasserstein order must be a finite p >= 1, got {p}")));
    }
    if opts.levels == 0 {
        return Err(Error::invalid("quantile resolution must be positive"));
    }
    let levels = opts.levels;
    let us: Vec<f64> = (0..levels).map(|k| (k as f64 + 0.5) / levels as f64).collect();
    let qm = quantiles_at(m, &us, opts.mode);
    let qn = quantiles_at(n, &us, opts.mode);
    let s = compensated_sum(qm.iter().zip(&qn).map(|(a, b)| (a - b).abs().powf(p)));
    Ok((s / levels as f64).powf(1.0 / p))
}

/// Why two measures fail to be in convex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexOrderViolation {
    MeanMismatch { mean_first: f64, mean_second: f64 },
    /// `call(second, strike) < call(first, strike) − tol`.
    CallDominance { strike: f64, deficit: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConvexOrderVerdict {
    Holds,
    Fails { witness: ConvexOrderViolation },
}

impl ConvexOrderVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, ConvexOrderVerdict::Holds)
    }
}

/// Whether the two means agree within [`MEAN_TOLERANCE`].
pub fn means_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= MEAN_TOLERANCE * (1.0 + a.abs())
}

/// Checks `m ≤_c n`: equal means and `call(n, ·) ≥ call(m, ·)` at every
/// strike of the merged grid. Both call functions are piecewise linear
/// with kinks only on atoms, so the merged grid check is exact.
pub fn check_convex_order(m: &GridMeasure, n: &GridMeasure) -> ConvexOrderVerdict {
    let (mean_m, mean_n) = (m.mean(), n.mean());
    if !means_match(mean_m, mean_n) {
        return ConvexOrderVerdict::Fails {
            witness: ConvexOrderViolation::MeanMismatch {
                mean_first: mean_m,
                mean_second: mean_n,
            },
        };
    }
    let z = merged_grid(&m.grid, &n.grid);
    let cm = call_values(m, &z);
    let cn = call_values(n, &z);
    for (k, &strike) in z.iter().enumerate() {
        let deficit = cm[k] - cn[k];
        if deficit > CALL_DOMINANCE_TOLERANCE {
            return ConvexOrderVerdict::Fails {
                witness: ConvexOrderViolation::CallDominance { strike, deficit },
            };
        }
    }
    ConvexOrderVerdict::Holds
}

/// Call function of `m` at the increasing strikes `z`, computed from the
/// right with running sums (O(n + |z|)).
pub fn call_values(m: &GridMeasure, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    // Σ_{x_i > k} w_i and Σ_{x_i > k} w_i x_i
    let mut mass = 0.0;
    let mut first = 0.0;
    let mut i = m.grid.len();
    for (k, &strike) in z.iter().enumerate().rev() {
        while i > 0 && m.grid[i - 1] > strike {
            i -= 1;
            mass += m.weights[i];
            first += m.weights[i] * m.grid[i];
        }
        out[k] = (first - mass * strike).max(0.0);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DominanceVerdict {
    /// The second measure dominates the first in first order.
    Dominates,
    /// `F_n(witness) − F_m(witness) = excess > 0`.
    Fails { witness: f64, excess: f64 },
}

impl DominanceVerdict {
    pub fn dominates(&self) -> bool {
        matches!(self, DominanceVerdict::Dominates)
    }
}

/// Checks that `n` dominates `m` in first order: `F_n ≤ F_m` on the merged
/// grid (up to [`CDF_TOLERANCE`]). The witness is the point of largest
/// violation.
pub fn check_first_order_dominance(m: &GridMeasure, n: &GridMeasure) -> DominanceVerdict {
    check_first_order_dominance_tol(m, n, CDF_TOLERANCE)
}

pub fn check_first_order_dominance_tol(m: &GridMeasure, n: &GridMeasure, tol: f64) -> DominanceVerdict {
    let (z, fm, fn_) = merged_cdfs(m, n);
    let mut worst: Option<(f64, f64)> = None;
    for k in 0..z.len() {
        let excess = fn_[k] - fm[k];
        if excess > tol && worst.is_none_or(|(_, e)| excess > e) {
            worst = Some((z[k], excess));
        }
    }
    match worst {
        Some((witness, excess)) => DominanceVerdict::Fails { witness, excess },
        None => DominanceVerdict::Dominates,
    }
}

/// Largest `F_n − F_m` over the merged grid (positive means `n` does not
/// dominate `m`).
pub fn dominance_excess(m: &GridMeasure, n: &GridMeasure) -> f64 {
    let (_, fm, fn_) = merged_cdfs(m, n);
    fm.iter()
        .zip(&fn_)
        .map(|(a, b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// A family of measures indexed by increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeacockFamily {
    times: Vec<f64>,
    measures: Vec<GridMeasure>,
}

impl PeacockFamily {
    /// Builds a family. Convex-order monotonicity is not assumed here; see
    /// [`PeacockFamily::verify`].
    pub fn new(times: Vec<f64>, measures: Vec<GridMeasure>) -> Result<Self> {
        if times.len() != measures.len() {
            return Err(Error::invalid(format!(
                "{} times but {} measures",
                times.len(),
                measures.len()
            )));
        }
        check_strictly_increasing(&times, "times")?;
        Ok(Self { times, measures })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn measures(&self) -> &[GridMeasure] {
        &self.measures
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the member at time `t` (relative tolerance 1e-9).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    pub fn at(&self, t: f64) -> Option<&GridMeasure> {
        self.index_of(t).map(|i| &self.measures[i])
    }

    /// Convex-order check across every consecutive pair; returns the first
    /// failing pair.
    pub fn verify(&self) -> PeacockVerdict {
        for (k, pair) in self.measures.windows(2).enumerate() {
            if let ConvexOrderVerdict::Fails { witness } = check_convex_order(&pair[0], &pair[1]) {
                return PeacockVerdict::Fails {
                    interval: k,
                    t_first: self.times[k],
                    t_second: self.times[k + 1],
                    witness,
                };
            }
        }
        PeacockVerdict::Holds
    }

    /// Second moments `m²₂(μ_t)` about zero.
    pub fn second_moments(&self) -> Vec<f64> {
        self.measures.iter().map(|m| m.moment(2, 0.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PeacockVerdict {
    Holds,
    Fails {
        interval: usize,
        t_first: f64,
        t_second: f64,
        witness: ConvexOrderViolation,
    },
}

impl PeacockVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, PeacockVerdict::Holds)
    }
}

/// Kinetic diagnostics of a curve of densities at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDerivative {
    /// `W₂(p_t, p_{t+h}) / h`.
    pub w2_rate: f64,
    /// `½ (∫ (p′/p)² p dx)^{1/2}`, the metric speed of the heat flow.
    pub fisher_rate_weighted: f64,
    /// `½ (∫ (p′/p)² dx)^{1/2}`, without the density weight.
    pub fisher_rate_unweighted: f64,
}

/// Quantile levels used for the W₂ rate in [`metric_derivative_diag`].
pub const METRIC_DIAG_LEVELS: usize = 1 << 16;

/// Compares the finite-difference W₂ speed of a family of densities with
/// the score-based kinetic rate at time `t`.
///
/// Members at `t` and `t + h` must exist in the family. The score `p′/p`
/// uses second-order differences of `weight / cell width`; every density
/// value at `t` must be strictly positive.
pub fn metric_derivative_diag(fam: &PeacockFamily, t: f64, h: f64) -> Result<MetricDerivative> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step h must be positive, got {h}")));
    }
    let p = fam.at(t).ok_or(Error::TimeNotOnGrid { t })?;
    let q = fam.at(t + h).ok_or(Error::TimeNotOnGrid { t: t + h })?;
    let opts = WpOptions {
        levels: METRIC_DIAG_LEVELS,
        mode: QuantileMode::Cells,
    };
    let w2_rate = wp_distance_with(p, q, 2.0, &opts)? / h;

    let density = p.densities();
    if let Some(i) = density.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::NonPositiveDensity {
            x: p.grid[i],
            value: density[i],
        });
    }
    let grid = p.grid();
    let widths = p.cell_widths();
    let (mut weighted, mut unweighted) = (0.0, 0.0);
    if grid.len() >= 3 {
        for i in 0..grid.len() {
            let window = stencil_window(i, grid.len(), 3);
            let w = fd_weights(grid[i], &grid[window.clone()], 1);
            let dp: f64 = window.zip(w).map(|(k, c)| c * density[k]).sum();
            let score = dp / density[i];
            weighted += score * score * p.weights[i];
            unweighted += score * score * widths[i];
        }
    }
    Ok(MetricDerivative {
        w2_rate,
        fisher_rate_weighted: 0.5 * weighted.sqrt(),
        fisher_rate_unweighted: 0.5 * unweighted.sqrt(),
    })
}
