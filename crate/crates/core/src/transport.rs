//! Martingale couplings between measures in convex order, Lipschitz
//! kernels, kernel chains and the meet coupling.

use std::collections::BTreeMap;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dupire::LocalVolSurface;
use crate::error::{Error, Result};
use crate::mc::{path_rng, simulate_paths, InverseCdf, PathEnsemble};
use crate::measures::{
    check_convex_order, check_first_order_dominance, dominance_excess, means_match, w1_distance,
    ConvexOrderVerdict, ConvexOrderViolation, DominanceVerdict, GridMeasure, PeacockFamily, PeacockVerdict,
};
use crate::numerics::{check_strictly_increasing, compensated_sum, Matrix};

/// Kernel rows must sum to one within this tolerance.
pub const ROW_MASS_TOLERANCE: f64 = 1e-10;

/// Source pairs checked exhaustively up to this many rows.
pub const ALL_PAIRS_LIMIT: usize = 512;

/// A transition kernel `x ↦ π_x` on a finite source grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleKernel {
    source: Vec<f64>,
    rows: Vec<GridMeasure>,
    source_weights: Option<Vec<f64>>,
}

impl MartingaleKernel {
    pub fn new(source: Vec<f64>, rows: Vec<GridMeasure>, source_weights: Option<Vec<f64>>) -> Result<Self> {
        check_strictly_increasing(&source, "kernel source grid")?;
        if rows.len() != source.len() {
            return Err(Error::invalid(format!(
                "{} rows for {} source points",
                rows.len(),
                source.len()
            )));
        }
        if let Some(w) = &source_weights {
            if w.len() != source.len() {
                return Err(Error::invalid("source weights do not match the source grid"));
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid("source weights must be nonnegative"));
            }
            let sum = compensated_sum(w.iter().copied());
            if (sum - 1.0).abs() > ROW_MASS_TOLERANCE {
                return Err(Error::NotNormalized { sum });
            }
        }
        Ok(Self {
            source,
            rows,
            source_weights,
        })
    }

    /// `π_x = δ_x`.
    pub fn identity(grid: &[f64]) -> Result<Self> {
        let rows = grid.iter().map(|&x| GridMeasure::dirac(x)).collect();
        Self::new(grid.to_vec(), rows, None)
    }

    /// Heat kernel rows: one discretized `N(0, h)` on a symmetric grid of
    /// `2·half_points + 1` nodes with spacing `dx`, translated to each
    /// source point. Translation makes `W₁(π_x, π_y) = |x − y|` exactly.
    pub fn heat(source: &[f64], h: f64, dx: f64, half_points: usize) -> Result<Self> {
        if !(h > 0.0) || !(dx > 0.0) {
            return Err(Error::invalid("heat kernel needs positive variance and spacing"));
        }
        let m = half_points as i64;
        let grid: Vec<f64> = (-m..=m).map(|k| k as f64 * dx).collect();
        let base = GridMeasure::gaussian(0.0, h.sqrt(), grid)?;
        // symmetrize so the base mean is zero to rounding
        let w = base.weights();
        let sym: Vec<f64> = (0..w.len()).map(|i| 0.5 * (w[i] + w[w.len() - 1 - i])).collect();
        let base = GridMeasure::normalized(base.grid().to_vec(), sym)?;
        let rows = source.iter().map(|&x| base.translate(x)).collect();
        Self::new(source.to_vec(), rows, None)
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn rows(&self) -> &[GridMeasure] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &GridMeasure {
        &self.rows[i]
    }

    pub fn source_weights(&self) -> Option<&[f64]> {
        self.source_weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Union of the row supports.
    pub fn target_grid(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.rows.iter().flat_map(|r| r.grid().iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Rows as a dense matrix on [`Self::target_grid`].
    pub fn dense_rows(&self) -> (Vec<f64>, Matrix) {
        let target = self.target_grid();
        let mut m = Matrix::zeros(self.len(), target.len());
        for (i, row) in self.rows.iter().enumerate() {
            for (&y, &w) in row.grid().iter().zip(row.weights()) {
                let j = target.binary_search_by(|t| t.total_cmp(&y)).expect("row support lies in the target grid");
                m.set(i, j, w);
            }
        }
        (target, m)
    }

    /// `max_i |mean(π_{x_i}) − x_i|`.
    pub fn martingale_defect(&self) -> f64 {
        self.source
            .iter()
            .zip(&self.rows)
            .map(|(x, r)| (r.mean() - x).abs())
            .fold(0.0, f64::max)
    }

    /// `∫∫ |y − x| π_x(dy) w(dx)` with the source weights, or uniform
    /// weights when there are none.
    pub fn first_moment(&self) -> f64 {
        let uniform = 1.0 / self.len() as f64;
        compensated_sum(self.source.iter().zip(&self.rows).enumerate().map(|(i, (&x, r))| {
            let w = self.source_weights.as_ref().map_or(uniform, |w| w[i]);
            w * r.expect(|y| (y - x).abs())
        }))
    }

    /// `∫ π_x dμ(x)`. `mu` must live on the source grid.
    pub fn push_forward(&self, mu: &GridMeasure) -> Result<GridMeasure> {
        let mut acc: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        for (&x, &w) in mu.grid().iter().zip(mu.weights()) {
            if w == 0.0 {
                continue;
            }
            let i = self
                .source
                .binary_search_by(|s| s.total_cmp(&x))
                .map_err(|_| Error::invalid(format!("point {x} is not on the kernel source grid")))?;
            for (&y, &p) in self.rows[i].grid().iter().zip(self.rows[i].weights()) {
                acc.entry(order_key(y)).or_insert((y, 0.0)).1 += w * p;
            }
        }
        let (grid, weights): (Vec<f64>, Vec<f64>) = acc.into_values().unzip();
        GridMeasure::normalized(grid, weights)
    }

    /// Joint weights `wᵢ π_{xᵢ}(yⱼ)` on `source × target`, using the
    /// source weights (uniform when absent). Row supports must lie in
    /// `target`.
    pub fn joint_on(&self, target: &[f64]) -> Matrix {
        let n = self.len();
        let mut m = Matrix::zeros(n, target.len());
        for (i, row) in self.rows.iter().enumerate() {
            let w = self.source_weights.as_ref().map_or(1.0 / n as f64, |w| w[i]);
            for (&y, &p) in row.grid().iter().zip(row.weights()) {
                if let Ok(j) = target.binary_search_by(|t| t.total_cmp(&y)) {
                    m.set(i, j, w * p);
                }
            }
        }
        m
    }

    /// `x ↦ ∫ g dπ_x` at every source point.
    pub fn conditional_expectation(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        self.rows.iter().map(|r| r.expect(&g)).collect()
    }
}

/// Maps an `f64` to a `u64` with the same order.
fn order_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// What the coupling linear program optimizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective {
    /// Any feasible vertex.
    FeasibleOnly,
    /// Minimizes `Σ γ(i, j) cost(xᵢ, yⱼ)`.
    Minimize(fn(f64, f64) -> f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub kernel: MartingaleKernel,
    /// Joint weights `γ(i, j)` on the supports of `mu` and `nu`.
    pub joint: Matrix,
    pub objective_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    /// Convex-order witness, when the direct check finds one.
    pub witness: Option<ConvexOrderViolation>,
    pub solver: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CouplingOutcome {
    Coupled(Coupling),
    Infeasible(InfeasibilityCertificate),
}

impl CouplingOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, CouplingOutcome::Coupled(_))
    }

    pub fn coupling(&self) -> Option<&Coupling> {
        match self {
            CouplingOutcome::Coupled(c) => Some(c),
            CouplingOutcome::Infeasible(_) => None,
        }
    }
}

/// Linear program for a martingale coupling of `mu` and `nu`.
///
/// The unknowns are the kernel entries `k(i, j) = γ(i, j) / μᵢ` on the
/// supports of both measures, with constraints `Σⱼ k(i, j) = 1`,
/// `Σⱼ k(i, j)(yⱼ − xᵢ) = 0` and `Σᵢ μᵢ k(i, j) / νⱼ = 1`. Every right-hand
/// side is then of order one, so the solver's absolute tolerance acts as a
/// relative one even for atoms of weight 1e-15. The martingale constraint
/// of the heaviest source atom and the column constraint of the heaviest
/// target atom are implied by the others and dropped.
pub fn solve_martingale_coupling(mu: &GridMeasure, nu: &GridMeasure, objective: Objective) -> Result<CouplingOutcome> {
    let (m_mu, m_nu) = (mu.mean(), nu.mean());
    if !means_match(m_mu, m_nu) {
        return Err(Error::MeanMismatch {
            first: m_mu,
            second: m_nu,
        });
    }
    let (mu, nu) = (mu.compact(), nu.compact());
    let (xs, ys) = (mu.grid(), nu.grid());
    let (pw, qw) = (mu.weights(), nu.weights());
    let (n, m) = (xs.len(), ys.len());
    let heaviest = |w: &[f64]| (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
    let (skip_row, skip_col) = (heaviest(pw), heaviest(qw));

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(n * m);
    for (i, &x) in xs.iter().enumerate() {
        for &y in ys {
            let c = match objective {
                Objective::FeasibleOnly => 0.0,
                Objective::Minimize(f) => pw[i] * f(x, y),
            };
            vars.push(lp.add_var(c, (0.0, f64::INFINITY)));
        }
    }
    for i in 0..n {
        let row: Vec<_> = (0..m).map(|j| (vars[i * m + j], 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, 1.0);
        if i != skip_row {
            let mart: Vec<_> = (0..m).map(|j| (vars[i * m + j], ys[j] - xs[i])).collect();
            lp.add_constraint(mart.as_slice(), ComparisonOp::Eq, 0.0);
        }
    }
    for j in (0..m).filter(|&j| j != skip_col) {
        let col: Vec<_> = (0..n).map(|i| (vars[i * m + j], pw[i] / qw[j])).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, 1.0);
    }
    let solution = match lp.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => {
            let witness = match check_convex_order(&mu, &nu) {
                ConvexOrderVerdict::Fails { witness } => Some(witness),
                ConvexOrderVerdict::Holds => None,
            };
            return Ok(CouplingOutcome::Infeasible(InfeasibilityCertificate {
                witness,
                solver: "linear program infeasible".into(),
            }));
        }
        Err(e) => return Err(Error::Lp(e.to_string())),
    };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let k: Vec<f64> = (0..m).map(|j| solution.var_value(vars[i * m + j]).max(0.0)).collect();
        rows.push(GridMeasure::normalized(ys.to_vec(), k)?.compact());
    }
    let kernel = MartingaleKernel::new(xs.to_vec(), rows, Some(pw.to_vec()))?;
    let joint = kernel.joint_on(ys);
    Ok(CouplingOutcome::Coupled(Coupling {
        kernel,
        joint,
        objective_value: solution.objective(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDetail {
    pub i: usize,
    pub j: usize,
    pub w1: f64,
    pub distance: f64,
    /// `W₁(π_{xᵢ}, π_{xⱼ}) − |xᵢ − xⱼ|`.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub pass: bool,
    pub max_violation: f64,
    pub tolerance: f64,
    pub all_pairs: bool,
    /// Pair attaining the largest violation.
    pub worst: Option<PairDetail>,
    pub pairs: Vec<PairDetail>,
}

/// Checks `W₁(π_x, π_y) ≤ |x − y| + tol` on every pair of rows when the
/// kernel has at most [`ALL_PAIRS_LIMIT`] rows, otherwise on adjacent rows.
pub fn lipschitz_kernel_check(k: &MartingaleKernel, tol: f64) -> LipschitzReport {
    let n = k.len();
    let all_pairs = n <= ALL_PAIRS_LIMIT;
    let mut pairs = Vec::new();
    for i in 0..n {
        let stop = if all_pairs { n } else { (i + 2).min(n) };
        for j in i + 1..stop {
            let w1 = w1_distance(&k.rows[i], &k.rows[j]);
            let distance = (k.source[j] - k.source[i]).abs();
            pairs.push(PairDetail {
                i,
                j,
                w1,
                distance,
                violation: w1 - distance,
            });
        }
    }
    let worst = pairs.iter().copied().max_by(|a, b| a.violation.total_cmp(&b.violation));
    let max_violation = worst.map_or(0.0, |p| p.violation.max(0.0));
    LipschitzReport {
        pass: max_violation <= tol,
        max_violation,
        tolerance: tol,
        all_pairs,
        worst,
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub lipschitz: bool,
    /// `|W₁(π_x, π_y) − |x − y|| ≤ tol` on adjacent rows.
    pub w1_equals_distance: bool,
    /// `π_{x_{i+1}}` dominates `π_{x_i}` in first order within tol.
    pub adjacent_dominance: bool,
    pub max_dominance_excess: f64,
    /// Row index `i` of the adjacent pair `(i, i+1)` with the largest
    /// dominance excess.
    pub worst_adjacent_pair: Option<usize>,
    pub martingale_defect: f64,
    /// All three properties agree.
    pub consistent: bool,
}

/// For martingale kernels the three properties coincide: Lipschitz,
/// `W₁(π_x, π_y) = |x − y|`, and first-order monotonicity of the rows.
pub fn dominance_equivalence_check(k: &MartingaleKernel, tol: f64) -> EquivalenceReport {
    let lipschitz = lipschitz_kernel_check(k, tol).pass;
    let mut w1_equal = true;
    let mut max_excess = 0.0f64;
    let mut worst = None;
    for i in 0..k.len().saturating_sub(1) {
        let (a, b) = (&k.rows[i], &k.rows[i + 1]);
        let gap = (w1_distance(a, b) - (k.source[i + 1] - k.source[i])).abs();
        if gap > tol {
            w1_equal = false;
        }
        let excess = dominance_excess(a, b);
        if excess > max_excess {
            max_excess = excess;
            worst = Some(i);
        }
    }
    let dominance = max_excess <= tol;
    EquivalenceReport {
        lipschitz,
        w1_equals_distance: w1_equal,
        adjacent_dominance: dominance,
        max_dominance_excess: max_excess,
        worst_adjacent_pair: worst,
        martingale_defect: k.martingale_defect(),
        consistent: lipschitz == w1_equal && w1_equal == dominance,
    }
}

/// One martingale kernel per consecutive pair of a peacock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelChain {
    pub times: Vec<f64>,
    pub initial: GridMeasure,
    pub kernels: Vec<MartingaleKernel>,
}

/// Couples every consecutive pair of `fam`.
pub fn chain_kernels(fam: &PeacockFamily, objective: Objective) -> Result<KernelChain> {
    if fam.is_empty() {
        return Err(Error::invalid("empty family"));
    }
    if let PeacockVerdict::Fails {
        t_first,
        t_second,
        witness,
        ..
    } = fam.verify()
    {
        return Err(Error::NotPeacock {
            t_first,
            t_second,
            reason: serde_json::to_string(&witness).unwrap_or_default(),
        });
    }
    let mut kernels = Vec::with_capacity(fam.len() - 1);
    for (k, pair) in fam.measures().windows(2).enumerate() {
        match solve_martingale_coupling(&pair[0], &pair[1], objective)? {
            CouplingOutcome::Coupled(c) => kernels.push(c.kernel),
            CouplingOutcome::Infeasible(_) => {
                return Err(Error::ChainInfeasible {
                    interval: k,
                    t_first: fam.times()[k],
                    t_second: fam.times()[k + 1],
                })
            }
        }
    }
    Ok(KernelChain {
        times: fam.times().to_vec(),
        initial: fam.measures()[0].clone(),
        kernels,
    })
}

impl KernelChain {
    /// Marginals obtained by pushing the initial law through the chain.
    pub fn marginals(&self) -> Result<Vec<GridMeasure>> {
        let mut out = vec![self.initial.clone()];
        for k in &self.kernels {
            let next = k.push_forward(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }

    /// Samples the discrete-time Markov chain.
    pub fn sample(&self, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
        let init = InverseCdf::new(&self.initial);
        let samplers: Vec<Vec<InverseCdf>> = self
            .kernels
            .iter()
            .map(|k| k.rows().iter().map(InverseCdf::new).collect())
            .collect();
        let kernels = &self.kernels;
        simulate_paths(self.times.clone(), n_paths, seed, "chacha8-kernel-chain-v1", |rng, row| {
            let mut x = init.sample(rng.random::<f64>());
            row[0] = x;
            for (k, kernel) in kernels.iter().enumerate() {
                // states always lie on the source grid: rows live on the
                // next marginal's grid
                let i = kernel
                    .source()
                    .binary_search_by(|s| s.total_cmp(&x))
                    .unwrap_or_else(|p| p.min(kernel.len() - 1));
                x = samplers[k][i].sample(rng.random::<f64>());
                row[k + 1] = x;
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetReport {
    pub n_paths: usize,
    /// Fraction of pairs glued before the horizon.
    pub met_fraction: f64,
    /// Grid points where the glued lower path exceeds the upper one.
    pub pathwise_violations: usize,
    /// Whether the law of `X^y_t` dominates that of the glued `X̃^x_t`.
    pub terminal_dominance: DominanceVerdict,
    pub mean_lower: f64,
    pub mean_upper: f64,
    /// Pairs whose glued lower path equals the upper path at every time.
    pub identical_paths: usize,
}

/// Simulates copies of `dX = σ dW` from `x` and from `y` on `steps` Euler
/// steps over `[s, t]` and glues the lower copy onto the upper one at the
/// first grid time where their order flips or they coincide.
#[allow(clippy::too_many_arguments)]
pub fn meet_coupling_sim(
    lv: &LocalVolSurface,
    x: f64,
    y: f64,
    s: f64,
    t: f64,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<MeetReport> {
    if !(x <= y) {
        return Err(Error::invalid(format!("need x ≤ y, got {x} and {y}")));
    }
    if !(t > s) || steps == 0 || n_paths == 0 {
        return Err(Error::invalid("need s < t, steps > 0 and n_paths > 0"));
    }
    let dt = (t - s) / steps as f64;
    let sdt = dt.sqrt();
    let euler = |rng: &mut rand_chacha::ChaCha8Rng, x0: f64| {
        let mut path = Vec::with_capacity(steps + 1);
        let mut v = x0;
        path.push(v);
        for k in 0..steps {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            v += lv.diffusion(s + k as f64 * dt, v) * sdt * z;
            path.push(v);
        }
        path
    };
    let results: Vec<(bool, usize, f64, f64, bool)> = {
        use rayon::prelude::*;
        (0..n_paths)
            .into_par_iter()
            .map(|k| {
                let lower = euler(&mut path_rng(seed, 2 * k as u64), x);
                let upper = euler(&mut path_rng(seed, 2 * k as u64 + 1), y);
                let meet = (0..=steps).find(|&i| lower[i] >= upper[i]);
                let glued: Vec<f64> = match meet {
                    Some(m) => lower[..m].iter().chain(&upper[m..]).copied().collect(),
                    None => lower,
                };
                let violations = glued.iter().zip(&upper).filter(|(a, b)| a > b).count();
                (meet.is_some(), violations, glued[steps], upper[steps], glued == upper)
            })
            .collect()
    };
    let met = results.iter().filter(|r| r.0).count();
    let violations = results.iter().map(|r| r.1).sum();
    let lows: Vec<f64> = results.iter().map(|r| r.2).collect();
    let highs: Vec<f64> = results.iter().map(|r| r.3).collect();
    let (low_law, high_law) = (GridMeasure::from_samples(&lows)?, GridMeasure::from_samples(&highs)?);
    Ok(MeetReport {
        n_paths,
        met_fraction: met as f64 / n_paths as f64,
        pathwise_violations: violations,
        terminal_dominance: check_first_order_dominance(&low_law, &high_law),
        mean_lower: low_law.mean(),
        mean_upper: high_law.mean(),
        identical_paths: results.iter().filter(|r| r.4).count(),
    })
}

/// `m₁(h)` at one lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstMomentPoint {
    pub h: f64,
    pub m1: f64,
}

/// Empirical first moments of transition measures over a range of lags
/// and the least-squares slope of `log m₁` against `log h`. Reported only:
/// no exponent is asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstMomentScaling {
    pub points: Vec<FirstMomentPoint>,
    pub exponent: f64,
}

impl FirstMomentScaling {
    pub fn from_points(points: Vec<FirstMomentPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("need at least two lags to fit an exponent"));
        }
        if points.iter().any(|p| !(p.h > 0.0) || !(p.m1 > 0.0) || !p.m1.is_finite()) {
            return Err(Error::invalid("lags and first moments must be positive"));
        }
        let n = points.len() as f64;
        let xs: Vec<f64> = points.iter().map(|p| p.h.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.m1.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::invalid("lags must not all be equal"));
        }
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        Ok(Self {
            points,
            exponent: sxy / sxx,
        })
    }
}

/// `m₁(h) = E|X_{t+h} − X_t|` from path increments, for each lag `h`
/// such that `t + h` is on the ensemble grid.
pub fn first_moment_scaling(ens: &PathEnsemble, t: f64, lags: &[f64]) -> Result<FirstMomentScaling> {
    let i = ens.time_index(t)?;
    let p = ens.paths();
    let points = lags
        .iter()
        .map(|&h| {
            let j = ens.time_index(t + h)?;
            if j <= i {
                return Err(Error::invalid(format!("lag {h} must be positive")));
            }
            let m1 = compensated_sum((0..ens.n_paths()).map(|k| (p.get(k, j) - p.get(k, i)).abs())) / ens.n_paths() as f64;
            Ok(FirstMomentPoint { h, m1 })
        })
        .collect::<Result<Vec<_>>>()?;
    FirstMomentScaling::from_points(points)
}
