//! Continuous Markov martingales that are not strong Markov, and a strong
//! Markov counterpart with the same marginals.
//!
//! * `easy`: geometric Brownian motion from 1 stopped at 2 during `[0, ½]`;
//!   after `½` paths that were stopped stay at 2 and the others continue
//!   freely.
//! * `cantor`: free on `[0, ⅓]`, stopped at the first hit of a truncated
//!   Cantor set in `[1, 2]` during `[⅓, ⅔]`, then frozen or free as above.
//! * `excursion`: as `easy` up to `½`; afterwards free paths are absorbed
//!   at 2 and atom paths start excursions at the rate that keeps the atom
//!   mass constant.
//! * `brownian`: arithmetic Brownian motion from 1, the strong Markov
//!   control.
//!
//! GBM steps are exact in log space. Barrier hits between grid times are
//! detected with the Brownian-bridge crossing probability.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{detect_atoms, empirical_kernel, empirical_marginal, path_rng, simulate_paths, Estimate, KernelBinning, PathEnsemble};
use crate::measures::{dominance_excess, w1_distance};
use crate::numerics::{normal_cdf, Matrix};
use crate::transport::{first_moment_scaling, FirstMomentScaling};

/// Barrier and atom location of the `easy` and `excursion` processes.
pub const BARRIER: f64 = 2.0;

/// Slack multiplier for the regularity checks, in standard errors.
pub const REGULARITY_Z: f64 = 4.0;

/// Two-sample Kolmogorov–Smirnov 95% coefficient.
pub const KS_95: f64 = 1.36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalleryKind {
    Easy,
    Cantor,
    Excursion,
    Brownian,
}

impl std::str::FromStr for GalleryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Self::Easy),
            "cantor" => Ok(Self::Cantor),
            "excursion" => Ok(Self::Excursion),
            "brownian" => Ok(Self::Brownian),
            other => Err(Error::Parse(format!("unknown gallery process '{other}'"))),
        }
    }
}

/// One gallery process on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryProcessSpec {
    pub kind: GalleryKind,
    pub n_paths: usize,
    /// Simulation steps on `[0, 1]`.
    pub steps: usize,
    /// Recorded intervals on `[0, 1]`; must divide `steps`.
    #[serde(default = "default_record")]
    pub record: usize,
    /// Cantor truncation depth.
    #[serde(default = "default_depth")]
    pub depth: u32,
    pub seed: u64,
}

fn default_record() -> usize {
    60
}

fn default_depth() -> u32 {
    8
}

impl GalleryProcessSpec {
    pub fn new(kind: GalleryKind, n_paths: usize, steps: usize, seed: u64) -> Self {
        Self {
            kind,
            n_paths,
            steps,
            record: default_record(),
            depth: default_depth(),
            seed,
        }
    }

    pub fn build(&self) -> Result<PathEnsemble> {
        let grid = TimeGrid::new(self.steps, self.record)?;
        match self.kind {
            GalleryKind::Easy => build_easy(self.n_paths, grid, self.seed),
            GalleryKind::Cantor => build_cantor(self.n_paths, grid, self.depth, self.seed),
            GalleryKind::Excursion => build_excursion(self.n_paths, grid, self.seed).map(|e| e.ensemble),
            GalleryKind::Brownian => build_brownian(self.n_paths, grid, self.seed),
        }
    }
}

/// Uniform simulation grid on `[0, 1]` with a coarser recorded subgrid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub steps: usize,
    pub record: usize,
}

impl TimeGrid {
    pub fn new(steps: usize, record: usize) -> Result<Self> {
        if steps == 0 || record == 0 || !steps.is_multiple_of(record) {
            return Err(Error::invalid(format!(
                "recorded intervals ({record}) must divide the step count ({steps})"
            )));
        }
        Ok(Self { steps, record })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    fn every(&self) -> usize {
        self.steps / self.record
    }

    pub fn recorded_times(&self) -> Vec<f64> {
        (0..=self.record).map(|k| k as f64 / self.record as f64).collect()
    }

    /// Step index of time `num/den`; errors when it is not a step.
    fn step_of(&self, num: usize, den: usize, what: &str) -> Result<usize> {
        if !(self.steps * num).is_multiple_of(den) || !(self.record * num).is_multiple_of(den) {
            return Err(Error::invalid(format!(
                "{what} must lie on both the step grid ({}) and the recorded grid ({})",
                self.steps, self.record
            )));
        }
        Ok(self.steps * num / den)
    }
}

/// Probability that a unit-volatility Brownian bridge from `a0` to `a1`
/// over `dt` touches `level`.
pub fn bridge_crossing_probability(a0: f64, a1: f64, level: f64, dt: f64) -> f64 {
    let (d0, d1) = (level - a0, level - a1);
    if d0 * d1 <= 0.0 {
        return 1.0;
    }
    (-2.0 * d0 * d1 / dt).exp()
}

/// `P(τ ≤ ½)` for GBM from 1 and barrier 2:
/// `P(sup_{u≤T}(W_u − u/2) ≥ a) = Φ((−a − T/2)/√T) + e^{−a} Φ((−a + T/2)/√T)`
/// with `a = ln 2`, `T = ½`.
pub fn easy_stop_probability() -> f64 {
    let (a, t) = (BARRIER.ln(), 0.5f64);
    normal_cdf((-a - 0.5 * t) / t.sqrt()) + (-a).exp() * normal_cdf((-a + 0.5 * t) / t.sqrt())
}

fn gbm_step(rng: &mut ChaCha8Rng, log_s: f64, dt: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    log_s - 0.5 * dt + dt.sqrt() * z
}

/// Runs GBM from `log_s` over `steps` steps, stopping at `ln barrier`.
/// Returns the log state after each step and whether the barrier was hit.
fn stopped_gbm(rng: &mut ChaCha8Rng, mut log_s: f64, steps: usize, dt: f64, out: &mut Vec<f64>) -> bool {
    let level = BARRIER.ln();
    for _ in 0..steps {
        let next = gbm_step(rng, log_s, dt);
        let p = bridge_crossing_probability(log_s, next, level, dt);
        let u: f64 = rng.random();
        if next >= level || u < p {
            out.push(level);
            return true;
        }
        log_s = next;
        out.push(log_s);
    }
    false
}

/// Writes recorded states from a sequence of per-step values.
fn record(values: &[f64], grid: TimeGrid, row: &mut [f64]) {
    for (k, slot) in row.iter_mut().enumerate() {
        *slot = values[k * grid.every()];
    }
}

/// Shared first phase of `easy` and `excursion`: per-step states on
/// `[0, ½]` and the stop indicator. `states[0] = 1`.
fn easy_phase_one(rng: &mut ChaCha8Rng, grid: TimeGrid, half: usize) -> (Vec<f64>, bool) {
    let mut logs = vec![0.0];
    let stopped = stopped_gbm(rng, 0.0, half, grid.dt(), &mut logs);
    let mut states: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    if stopped {
        *states.last_mut().expect("nonempty") = BARRIER;
        states.resize(half + 1, BARRIER);
    }
    (states, stopped)
}

/// Stopped geometric Brownian motion of the `easy` example.
pub fn build_easy(n_paths: usize, grid: TimeGrid, seed: u64) -> Result<PathEnsemble> {
    let half = grid.step_of(1, 2, "t = ½")?;
    simulate_paths(grid.recorded_times(), n_paths, seed, "chacha8-gallery-easy-v1", |rng, row| {
        let (mut states, stopped) = easy_phase_one(rng, grid, half);
        let mut log_s = states[half].ln();
        for _ in half..grid.steps {
            if stopped {
                states.push(BARRIER);
            } else {
                log_s = gbm_step(rng, log_s, grid.dt());
                states.push(log_s.exp());
            }
        }
        record(&states, grid, row);
    })
}

/// Arithmetic Brownian motion from 1.
pub fn build_brownian(n_paths: usize, grid: TimeGrid, seed: u64) -> Result<PathEnsemble> {
    simulate_paths(grid.recorded_times(), n_paths, seed, "chacha8-gallery-brownian-v1", |rng, row| {
        let mut x = 1.0;
        let mut states = vec![x];
        let sdt = grid.dt().sqrt();
        for _ in 0..grid.steps {
            let z: f64 = rng.sample(StandardNormal);
            x += sdt * z;
            states.push(x);
        }
        record(&states, grid, row);
    })
}

/// Truncated middle-thirds Cantor set on `[origin, origin + 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantorSet {
    pub origin: f64,
    pub depth: u32,
}

/// Where a point sits relative to a [`CantorSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CantorPosition {
    /// Inside one of the `2^depth` retained intervals.
    Inside,
    /// In the open gap `(lo, hi)`; `lo` or `hi` is infinite outside the
    /// hull.
    Gap { lo: f64, hi: f64 },
}

impl CantorSet {
    pub fn new(origin: f64, depth: u32) -> Result<Self> {
        if !(1..=20).contains(&depth) {
            return Err(Error::invalid(format!("Cantor depth must be in 1..=20, got {depth}")));
        }
        Ok(Self { origin, depth })
    }

    pub fn locate(&self, s: f64) -> CantorPosition {
        let (a, b) = (self.origin, self.origin + 1.0);
        if s < a {
            return CantorPosition::Gap {
                lo: f64::NEG_INFINITY,
                hi: a,
            };
        }
        if s > b {
            return CantorPosition::Gap { lo: b, hi: f64::INFINITY };
        }
        let (mut left, mut width) = (a, 1.0);
        for _ in 0..self.depth {
            let third = width / 3.0;
            let (g0, g1) = (left + third, left + 2.0 * third);
            if s > g0 && s < g1 {
                return CantorPosition::Gap { lo: g0, hi: g1 };
            }
            if s >= g1 {
                left = g1;
            }
            width = third;
        }
        CantorPosition::Inside
    }

    /// Whether `s` lies in a retained interval.
    pub fn contains(&self, s: f64) -> bool {
        matches!(self.locate(s), CantorPosition::Inside)
    }

    /// Endpoints of the retained intervals, in increasing order.
    pub fn endpoints(&self) -> Vec<f64> {
        let mut intervals = vec![(self.origin, self.origin + 1.0)];
        for _ in 0..self.depth {
            intervals = intervals
                .into_iter()
                .flat_map(|(a, b)| {
                    let t = (b - a) / 3.0;
                    [(a, a + t), (b - t, b)]
                })
                .collect();
        }
        intervals.into_iter().flat_map(|(a, b)| [a, b]).collect()
    }
}

/// Cantor variant: free GBM on `[0, ⅓]`, stopped at the first hit of the
/// depth-truncated Cantor set on `[1, 2]` during `[⅓, ⅔]`, then frozen if
/// stopped and free otherwise.
pub fn build_cantor(n_paths: usize, grid: TimeGrid, depth: u32, seed: u64) -> Result<PathEnsemble> {
    let set = CantorSet::new(1.0, depth)?;
    let third = grid.step_of(1, 3, "t = ⅓")?;
    let two_thirds = grid.step_of(2, 3, "t = ⅔")?;
    let dt = grid.dt();
    simulate_paths(grid.recorded_times(), n_paths, seed, "chacha8-gallery-cantor-v1", |rng, row| {
        let mut log_s = 0.0f64;
        let mut states = vec![1.0];
        for _ in 0..third {
            log_s = gbm_step(rng, log_s, dt);
            states.push(log_s.exp());
        }
        let mut stopped = set.contains(log_s.exp());
        let mut k = third;
        while k < two_thirds && !stopped {
            let CantorPosition::Gap { lo, hi } = set.locate(log_s.exp()) else {
                stopped = true;
                break;
            };
            let next = gbm_step(rng, log_s, dt);
            let s1 = next.exp();
            let hit = if s1 <= lo {
                Some(lo)
            } else if s1 >= hi {
                Some(hi)
            } else {
                let p_lo = if lo > 0.0 {
                    bridge_crossing_probability(log_s, next, lo.ln(), dt)
                } else {
                    0.0
                };
                let p_hi = if hi.is_finite() {
                    bridge_crossing_probability(log_s, next, hi.ln(), dt)
                } else {
                    0.0
                };
                let u: f64 = rng.random();
                if u < p_lo {
                    Some(lo)
                } else if u < p_lo + p_hi {
                    Some(hi)
                } else {
                    None
                }
            };
            k += 1;
            match hit {
                Some(level) => {
                    log_s = level.ln();
                    states.push(level);
                    stopped = true;
                }
                None => {
                    log_s = next;
                    states.push(s1);
                }
            }
        }
        let frozen = *states.last().expect("nonempty");
        while states.len() <= two_thirds {
            states.push(frozen);
        }
        for _ in two_thirds..grid.steps {
            if stopped {
                states.push(frozen);
            } else {
                log_s = gbm_step(rng, log_s, dt);
                states.push(log_s.exp());
            }
        }
        record(&states, grid, row);
    })
}

/// Excursion variant and the bookkeeping of its atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub ensemble: PathEnsemble,
    /// Number of paths at the atom from `½` on.
    pub atom_count: usize,
    /// Per-step fraction of atom paths that started an excursion.
    pub leave_probabilities: Vec<f64>,
}

/// Same first phase as [`build_easy`] (bitwise identical for the same
/// seed). From `½` on, free paths are absorbed when they hit 2 and, at
/// each step, exactly as many atom paths start an excursion as were
/// absorbed, so the atom holds its mass at `½`. An excursion starts at
/// `2e^{±√Δt}` with the up probability that keeps the mean at 2.
pub fn build_excursion(n_paths: usize, grid: TimeGrid, seed: u64) -> Result<Excursion> {
    if n_paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let half = grid.step_of(1, 2, "t = ½")?;
    let dt = grid.dt();
    let level = BARRIER.ln();
    let jump = dt.sqrt();
    let p_up = (1.0 - (-jump).exp()) / (jump.exp() - (-jump).exp());

    struct PathState {
        rng: ChaCha8Rng,
        log_s: f64,
        at_atom: bool,
        row: Vec<f64>,
    }
    let mut paths: Vec<PathState> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k as u64);
            let (states, stopped) = easy_phase_one(&mut rng, grid, half);
            let mut row = vec![0.0; grid.record + 1];
            for (r, slot) in row.iter_mut().enumerate() {
                if r * grid.every() <= half {
                    *slot = states[r * grid.every()];
                }
            }
            PathState {
                rng,
                log_s: states[half].ln(),
                at_atom: stopped,
                row,
            }
        })
        .collect();
    let target = paths.iter().filter(|p| p.at_atom).count();
    let mut chooser = path_rng(seed, u64::MAX);
    let mut leave_probabilities = Vec::with_capacity(grid.steps - half);

    for step in half..grid.steps {
        let eligible: Vec<usize> = (0..n_paths).filter(|&k| paths[k].at_atom).collect();
        let absorbed: usize = paths
            .par_iter_mut()
            .filter(|p| !p.at_atom)
            .map(|p| {
                let next = gbm_step(&mut p.rng, p.log_s, dt);
                let cross = bridge_crossing_probability(p.log_s, next, level, dt);
                let u: f64 = p.rng.random();
                if u < cross {
                    p.log_s = level;
                    p.at_atom = true;
                    1
                } else {
                    p.log_s = next;
                    0
                }
            })
            .sum();
        let leave = eligible.len() + absorbed - target;
        if leave > eligible.len() {
            return Err(Error::BalanceInfeasible {
                step,
                probability: leave as f64 / eligible.len().max(1) as f64,
            });
        }
        leave_probabilities.push(if eligible.is_empty() {
            0.0
        } else {
            leave as f64 / eligible.len() as f64
        });
        // partial Fisher–Yates over the atom paths present at the start of
        // the step
        let mut pool = eligible;
        for r in 0..leave {
            let pick = chooser.random_range(r..pool.len());
            pool.swap(r, pick);
            let p = &mut paths[pool[r]];
            let up = chooser.random::<f64>() < p_up;
            p.log_s = level + if up { jump } else { -jump };
            p.at_atom = false;
        }
        if (step + 1) % grid.every() == 0 {
            let r = (step + 1) / grid.every();
            for p in paths.iter_mut() {
                p.row[r] = if p.at_atom { BARRIER } else { p.log_s.exp() };
            }
        }
    }
    let data: Vec<f64> = paths.into_iter().flat_map(|p| p.row).collect();
    let ensemble = PathEnsemble::new(
        grid.recorded_times(),
        Matrix::from_vec(n_paths, grid.record + 1, data)?,
        seed,
        "chacha8-gallery-excursion-v1",
    )?;
    Ok(Excursion {
        ensemble,
        atom_count: target,
        leave_probabilities,
    })
}

/// Test function pair for [`joint_law_distinguisher`]:
/// `f(x) = g(x) = tanh(x − 2)`.
pub fn distinguisher_test_function(x: f64) -> f64 {
    (x - BARRIER).tanh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguisherReport {
    pub t1: f64,
    pub t2: f64,
    /// `P(X_{t1} = 2 ∧ X_{t2} ≠ 2)` under each ensemble.
    pub stay_leave_a: Estimate,
    pub stay_leave_b: Estimate,
    pub stay_leave_diff: Estimate,
    /// `E[f(X_{t1}) g(X_{t2})]` under each ensemble.
    pub product_a: Estimate,
    pub product_b: Estimate,
    pub product_diff: Estimate,
    /// `W₁` between the two marginals at `t2` and the sum of their
    /// sampling bands.
    pub marginal_w1: f64,
    pub marginal_band: f64,
}

impl DistinguisherReport {
    /// The joint laws differ: the stay-then-leave difference has a 95%
    /// interval excluding zero.
    pub fn joint_laws_differ(&self) -> bool {
        self.stay_leave_diff.mean.abs() > self.stay_leave_diff.ci95
    }
}

/// Compares two ensembles on a two-time statistic that separates the
/// `easy` and `excursion` laws.
pub fn joint_law_distinguisher(a: &PathEnsemble, b: &PathEnsemble, t1: f64, t2: f64) -> Result<DistinguisherReport> {
    if a.times() != b.times() {
        return Err(Error::invalid("ensembles do not share a time grid"));
    }
    let (i, j) = (a.time_index(t1)?, a.time_index(t2)?);
    let stats = |e: &PathEnsemble| {
        let p = e.paths();
        let n = e.n_paths();
        let stay = Estimate::from_samples((0..n).map(|k| {
            let hit = p.get(k, i) == BARRIER && p.get(k, j) != BARRIER;
            f64::from(u8::from(hit))
        }))
        .expect("nonempty");
        let prod = Estimate::from_samples(
            (0..n).map(|k| distinguisher_test_function(p.get(k, i)) * distinguisher_test_function(p.get(k, j))),
        )
        .expect("nonempty");
        (stay, prod)
    };
    let ((sa, pa), (sb, pb)) = (stats(a), stats(b));
    let (ma, mb) = (empirical_marginal(a, t2)?, empirical_marginal(b, t2)?);
    let band = crate::mc::w1_sampling_band(&ma, a.n_paths()) + crate::mc::w1_sampling_band(&mb, b.n_paths());
    Ok(DistinguisherReport {
        t1,
        t2,
        stay_leave_a: sa,
        stay_leave_b: sb,
        stay_leave_diff: sa.minus(&sb),
        product_a: pa,
        product_b: pb,
        product_diff: pa.minus(&pb),
        marginal_w1: w1_distance(&ma, &mb),
        marginal_band: band,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    /// Lower row of the adjacent pair.
    pub row: usize,
    pub source_low: f64,
    pub source_high: f64,
    /// `sup (F_high − F_low)`.
    pub excess: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub pass: bool,
    pub rows: usize,
    pub violations: Vec<MonotonicityViolation>,
    /// Rows with fewer samples than the binning's `min_count`; skipped.
    pub underpopulated: Vec<usize>,
    /// Largest excess over all compared pairs, with its row.
    pub max_excess: f64,
    pub max_excess_row: Option<usize>,
    pub atom_rows: Vec<usize>,
}

/// Checks first-order dominance between adjacent rows of the empirical
/// kernel from `s` to `t`, allowing the two-sample KS slack
/// `1.36 √(1/n₁ + 1/n₂)`.
pub fn kernel_monotonicity_test(ens: &PathEnsemble, s: f64, t: f64, binning: &KernelBinning) -> Result<MonotonicityReport> {
    let k = empirical_kernel(ens, s, t, binning)?;
    let rows: Vec<usize> = (0..k.kernel.len()).filter(|&r| !k.flagged[r]).collect();
    let mut violations = Vec::new();
    let (mut max_excess, mut max_row) = (0.0f64, None);
    for pair in rows.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let excess = dominance_excess(k.kernel.row(a), k.kernel.row(b));
        let slack = KS_95 * (1.0 / k.counts[a] as f64 + 1.0 / k.counts[b] as f64).sqrt();
        if excess > max_excess {
            max_excess = excess;
            max_row = Some(a);
        }
        if excess > slack {
            violations.push(MonotonicityViolation {
                row: a,
                source_low: k.kernel.source()[a],
                source_high: k.kernel.source()[b],
                excess,
                slack,
            });
        }
    }
    Ok(MonotonicityReport {
        pass: violations.is_empty(),
        rows: k.kernel.len(),
        violations,
        underpopulated: (0..k.kernel.len()).filter(|&r| k.flagged[r]).collect(),
        max_excess,
        max_excess_row: max_row,
        atom_rows: (0..k.kernel.len()).filter(|&r| k.is_atom[r]).collect(),
    })
}

/// Shape whose preservation [`regularity_test`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    /// `g(x) = x`: conditional expectation increasing.
    Increasing,
    /// `g(x) = |x − 1|`: conditional expectation 1-Lipschitz.
    Lipschitz,
    /// `g(x) = (x − 1)₊`: conditional expectation convex.
    Convex,
}

impl Regularity {
    pub const ALL: [Regularity; 3] = [Regularity::Increasing, Regularity::Lipschitz, Regularity::Convex];

    pub fn test_function(self, x: f64) -> f64 {
        match self {
            Regularity::Increasing => x,
            Regularity::Lipschitz => (x - 1.0).abs(),
            Regularity::Convex => (x - 1.0).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityViolation {
    /// Row where the defect is measured (left row of a pair, centre row of
    /// a triple).
    pub row: usize,
    pub source: f64,
    pub amount: f64,
    pub slack: f64,
    pub at_atom: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub regularity: Regularity,
    pub pass: bool,
    pub sources: Vec<f64>,
    pub conditional_means: Vec<Estimate>,
    pub violations: Vec<RegularityViolation>,
}

/// Bin-wise `x ↦ Ê[g(X_T) | X_t ≈ x]` for the test function of
/// `regularity`, checked for the matching shape with a slack of
/// [`REGULARITY_Z`] standard errors. Under-populated rows are skipped.
pub fn regularity_test(
    ens: &PathEnsemble,
    t: f64,
    horizon: f64,
    binning: &KernelBinning,
    regularity: Regularity,
) -> Result<RegularityReport> {
    let k = empirical_kernel(ens, t, horizon, binning)?;
    let keep: Vec<usize> = (0..k.kernel.len()).filter(|&r| !k.flagged[r]).collect();
    let xs: Vec<f64> = keep.iter().map(|&r| k.kernel.source()[r]).collect();
    let atom: Vec<bool> = keep.iter().map(|&r| k.is_atom[r]).collect();
    let est: Vec<Estimate> = keep
        .iter()
        .map(|&r| {
            let row = k.kernel.row(r);
            let n = k.counts[r] as f64;
            let mean = row.expect(|y| regularity.test_function(y));
            let var = row.expect(|y| (regularity.test_function(y) - mean).powi(2)) * n / (n - 1.0).max(1.0);
            Estimate {
                mean,
                ci95: crate::mc::Z95 * (var / n).sqrt(),
                std: var.sqrt(),
                n: k.counts[r],
            }
        })
        .collect();
    let se: Vec<f64> = est.iter().map(Estimate::std_error).collect();
    let mut violations = Vec::new();
    let z = REGULARITY_Z;
    match regularity {
        Regularity::Increasing | Regularity::Lipschitz => {
            for a in 0..xs.len().saturating_sub(1) {
                let d = est[a + 1].mean - est[a].mean;
                let slack = z * se[a].hypot(se[a + 1]);
                let amount = match regularity {
                    Regularity::Increasing => -d,
                    _ => d.abs() - (xs[a + 1] - xs[a]),
                };
                if amount > slack {
                    violations.push(RegularityViolation {
                        row: a,
                        source: xs[a],
                        amount,
                        slack,
                        at_atom: atom[a] || atom[a + 1],
                    });
                }
            }
        }
        Regularity::Convex => {
            for c in 1..xs.len().saturating_sub(1) {
                let (hl, hr) = (xs[c] - xs[c - 1], xs[c + 1] - xs[c]);
                let change = (est[c + 1].mean - est[c].mean) / hr - (est[c].mean - est[c - 1].mean) / hl;
                let slack = z
                    * ((se[c + 1] / hr).powi(2) + (se[c] * (1.0 / hr + 1.0 / hl)).powi(2) + (se[c - 1] / hl).powi(2))
                        .sqrt();
                if -change > slack {
                    violations.push(RegularityViolation {
                        row: c,
                        source: xs[c],
                        amount: -change,
                        slack,
                        at_atom: atom[c - 1] || atom[c] || atom[c + 1],
                    });
                }
            }
        }
    }
    Ok(RegularityReport {
        regularity,
        pass: violations.is_empty(),
        sources: xs,
        conditional_means: est,
        violations,
    })
}

/// Fraction of paths at the barrier at time `t`, and whether every other
/// state is shared by at most `ln n` paths.
pub fn atom_profile(ens: &PathEnsemble, t: f64) -> Result<(Estimate, bool)> {
    let states = ens.states_at(t)?;
    let at = Estimate::from_samples(states.iter().map(|&x| f64::from(u8::from(x == BARRIER)))).expect("nonempty");
    let others: Vec<f64> = states.into_iter().filter(|&x| x != BARRIER).collect();
    Ok((at, detect_atoms(&others).is_empty()))
}

/// Absolute part of the marginal-matching tolerance used by
/// [`run_gallery`]; the sampling bands are added on top.
pub const MARGINAL_W1_TOLERANCE: f64 = 0.01;

/// Binned kernel window: rows from time `s`, targets at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWindow {
    pub s: f64,
    pub t: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub range: Option<(f64, f64)>,
}

fn default_bins() -> usize {
    20
}

impl KernelWindow {
    pub fn binning(&self) -> KernelBinning {
        let b = KernelBinning::new(self.bins);
        match self.range {
            Some((lo, hi)) => b.with_range(lo, hi),
            None => b,
        }
    }
}

/// Checks applied by [`run_gallery`]. Missing fields take the defaults
/// below; `null` disables a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryChecks {
    #[serde(default = "default_marginal_times")]
    pub marginal_times: Vec<f64>,
    #[serde(default = "default_distinguisher")]
    pub distinguisher: Option<(f64, f64)>,
    #[serde(default = "default_monotonicity")]
    pub monotonicity: Option<KernelWindow>,
    #[serde(default = "default_regularity")]
    pub regularity: Option<KernelWindow>,
    #[serde(default = "default_first_moments")]
    pub first_moments: Option<FirstMomentWindow>,
}

/// Lags for the first-moment scaling report, counted in recorded time
/// steps from `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstMomentWindow {
    pub t: f64,
    pub lag_steps: Vec<usize>,
}

fn default_first_moments() -> Option<FirstMomentWindow> {
    Some(FirstMomentWindow {
        t: 0.6,
        lag_steps: vec![1, 2, 4, 8, 16],
    })
}

fn default_marginal_times() -> Vec<f64> {
    vec![0.6, 0.8, 1.0]
}

fn default_distinguisher() -> Option<(f64, f64)> {
    Some((0.75, 1.0))
}

fn default_monotonicity() -> Option<KernelWindow> {
    Some(KernelWindow {
        s: 0.6,
        t: 0.9,
        bins: 20,
        range: Some((1.0, 3.0)),
    })
}

fn default_regularity() -> Option<KernelWindow> {
    Some(KernelWindow {
        s: 0.6,
        t: 1.0,
        bins: 20,
        range: Some((1.0, 3.0)),
    })
}

impl Default for GalleryChecks {
    fn default() -> Self {
        Self {
            marginal_times: default_marginal_times(),
            distinguisher: default_distinguisher(),
            monotonicity: default_monotonicity(),
            regularity: default_regularity(),
            first_moments: default_first_moments(),
        }
    }
}

/// A gallery run: several processes and the checks to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryRun {
    pub processes: Vec<GalleryProcessSpec>,
    #[serde(default)]
    pub checks: GalleryChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessReport {
    pub kind: GalleryKind,
    pub seed: u64,
    pub n_paths: usize,
    pub generator_id: String,
    pub monotonicity: Option<MonotonicityReport>,
    pub regularity: Vec<RegularityReport>,
    /// Reported only; takes no part in `pass`.
    pub first_moments: Option<FirstMomentScaling>,
    /// Every enabled kernel check passed.
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalComparison {
    pub t: f64,
    pub w1: f64,
    pub band: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub first: usize,
    pub second: usize,
    pub marginals: Vec<MarginalComparison>,
    pub marginals_match: bool,
    pub distinguisher: Option<DistinguisherReport>,
    pub joint_laws_differ: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryRunReport {
    pub processes: Vec<ProcessReport>,
    pub pairs: Vec<PairReport>,
}

/// Compares the marginals of two ensembles at `times`.
pub fn compare_marginals(a: &PathEnsemble, b: &PathEnsemble, times: &[f64]) -> Result<Vec<MarginalComparison>> {
    times
        .iter()
        .map(|&t| {
            let (ma, mb) = (empirical_marginal(a, t)?, empirical_marginal(b, t)?);
            let band = crate::mc::w1_sampling_band(&ma, a.n_paths()) + crate::mc::w1_sampling_band(&mb, b.n_paths());
            let w1 = w1_distance(&ma, &mb);
            Ok(MarginalComparison {
                t,
                w1,
                band,
                within: w1 <= MARGINAL_W1_TOLERANCE + band,
            })
        })
        .collect()
}

/// Builds every process of `run` and applies its checks. Pair reports
/// cover every pair of processes.
pub fn run_gallery(run: &GalleryRun) -> Result<(Vec<PathEnsemble>, GalleryRunReport)> {
    if run.processes.is_empty() {
        return Err(Error::invalid("gallery run lists no processes"));
    }
    let ensembles = run
        .processes
        .iter()
        .map(GalleryProcessSpec::build)
        .collect::<Result<Vec<_>>>()?;
    let checks = &run.checks;
    let mut processes = Vec::with_capacity(ensembles.len());
    for (spec, ens) in run.processes.iter().zip(&ensembles) {
        let monotonicity = checks
            .monotonicity
            .as_ref()
            .map(|w| kernel_monotonicity_test(ens, w.s, w.t, &w.binning()))
            .transpose()?;
        let regularity = match &checks.regularity {
            Some(w) => Regularity::ALL
                .iter()
                .map(|&r| regularity_test(ens, w.s, w.t, &w.binning(), r))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let first_moments = checks
            .first_moments
            .as_ref()
            .map(|w| {
                let i = ens.time_index(w.t)?;
                let times = ens.times();
                let lags = w
                    .lag_steps
                    .iter()
                    .map(|&k| {
                        times
                            .get(i + k)
                            .map(|u| u - times[i])
                            .ok_or_else(|| Error::invalid(format!("lag of {k} steps from t = {} leaves the grid", w.t)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                first_moment_scaling(ens, w.t, &lags)
            })
            .transpose()?;
        let pass = monotonicity.as_ref().is_none_or(|m| m.pass) && regularity.iter().all(|r| r.pass);
        processes.push(ProcessReport {
            kind: spec.kind,
            seed: spec.seed,
            n_paths: spec.n_paths,
            generator_id: ens.generator_id().to_string(),
            monotonicity,
            regularity,
            first_moments,
            pass,
        });
    }
    let mut pairs = Vec::new();
    for i in 0..ensembles.len() {
        for j in i + 1..ensembles.len() {
            let (a, b) = (&ensembles[i], &ensembles[j]);
            let marginals = compare_marginals(a, b, &checks.marginal_times)?;
            let distinguisher = checks
                .distinguisher
                .map(|(t1, t2)| joint_law_distinguisher(a, b, t1, t2))
                .transpose()?;
            pairs.push(PairReport {
                first: i,
                second: j,
                marginals_match: marginals.iter().all(|m| m.within),
                marginals,
                joint_laws_differ: distinguisher.as_ref().map(DistinguisherReport::joint_laws_differ),
                distinguisher,
            });
        }
    }
    Ok((ensembles, GalleryRunReport { processes, pairs }))
}
