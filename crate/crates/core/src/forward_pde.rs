//! Fokker–Planck solver `∂t p = ∂xx(a p)`, `a = σ²(x²)/2`, and the
//! calibrate → evolve → reprice round trip.
//!
//! The state is a vector of cell masses `w_i` on a possibly nonuniform grid
//! with trapezoidal control volumes `V_i`. With `u_i = a_i w_i / V_i` the
//! flux between neighbours is `(u_{i+1} − u_i) / h_{i+½}` and both ends are
//! zero-flux, so every column of the operator sums to zero and mass is
//! conserved to rounding. The mean changes only through `u_0 − u_{n−1}`,
//! which vanishes once the grid is padded into the tails.

use serde::{Deserialize, Serialize};

use crate::call_surface::{bl_density, validate_surface, CallSurface, Convention};
use crate::dupire::{local_vol, DupireConfig, LocalVolSurface};
use crate::error::{Error, Result};
use crate::measures::{call_values, GridMeasure, PeacockFamily};
use crate::numerics::{cell_widths, check_strictly_increasing, compensated_sum, locate, solve_tridiagonal};

/// Density values below `−NEGATIVITY_TOLERANCE` abort the solve.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

/// Explicit stability bound on `max(σ² x²) Δt / Δx²`.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    CrankNicolson,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpConfig {
    pub scheme: Scheme,
    /// Time steps per interval of the local-volatility time grid.
    pub substeps: usize,
    /// Crank–Nicolson steps at the start replaced by two half implicit
    /// Euler steps each, to damp the high-frequency content of the initial
    /// data.
    pub startup_steps: usize,
    /// Roundtrip grids extend this many standard deviations of the
    /// terminal marginal beyond its mean.
    pub padding_sd: f64,
}

impl Default for FpConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::CrankNicolson,
            substeps: 4,
            startup_steps: 2,
            padding_sd: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ConservationReport {
    pub steps: usize,
    /// Largest `|Σ w − 1|` over all steps.
    pub max_mass_error: f64,
    /// Largest `|mean − mean(p0)|` over all steps.
    pub max_mean_drift: f64,
    /// Smallest density value seen; tiny negatives are clipped on output.
    pub min_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub family: PeacockFamily,
    pub conservation: ConservationReport,
}

/// Mass-and-mean preserving projection of `p0` onto `grid`: each atom is
/// split linearly between its two neighbouring nodes.
pub fn project_onto_grid(p0: &GridMeasure, grid: &[f64]) -> Result<Vec<f64>> {
    check_strictly_increasing(grid, "solver grid")?;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let mut w = vec![0.0; grid.len()];
    for (&x, &m) in p0.grid().iter().zip(p0.weights()) {
        if m == 0.0 {
            continue;
        }
        if x < lo || x > hi {
            return Err(Error::OutsideGrid { x });
        }
        if grid.len() == 1 {
            w[0] += m;
            continue;
        }
        let (k, theta) = locate(grid, x);
        w[k] += (1.0 - theta) * m;
        w[k + 1] += theta * m;
    }
    Ok(w)
}

/// Tridiagonal operator `L` with `dw/dt = L w`, stored by bands.
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Operator {
    fn build(grid: &[f64], volumes: &[f64], a: &[f64]) -> Self {
        let n = grid.len();
        let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n.saturating_sub(1) {
            // flux through the face between i and i+1
            let c = 1.0 / (grid[i + 1] - grid[i]);
            let gi = c * a[i] / volumes[i];
            let gj = c * a[i + 1] / volumes[i + 1];
            diag[i] -= gi;
            upper[i] += gj;
            lower[i + 1] += gi;
            diag[i + 1] -= gj;
        }
        Self { lower, diag, upper }
    }

    fn apply(&self, w: &[f64], out: &mut [f64]) {
        let n = w.len();
        for i in 0..n {
            let mut v = self.diag[i] * w[i];
            if i > 0 {
                v += self.lower[i] * w[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * w[i + 1];
            }
            out[i] = v;
        }
    }

    /// Solves `(I − θ dt L) x = rhs` in place.
    fn solve_implicit(&self, theta_dt: f64, rhs: &mut [f64]) -> Result<()> {
        let lower: Vec<f64> = self.lower.iter().map(|v| -theta_dt * v).collect();
        let upper: Vec<f64> = self.upper.iter().map(|v| -theta_dt * v).collect();
        let diag: Vec<f64> = self.diag.iter().map(|v| 1.0 - theta_dt * v).collect();
        solve_tridiagonal(&lower, &diag, &upper, rhs)
    }
}

fn half_variance(lv: &LocalVolSurface, t: f64, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&x| {
            let d = lv.diffusion(t, x);
            0.5 * d * d
        })
        .collect()
}

/// Evolves `p0` (placed at the first local-volatility time) through every
/// later time of `lv` on the solver grid `grid`.
pub fn evolve(p0: &GridMeasure, lv: &LocalVolSurface, grid: &[f64], cfg: &FpConfig) -> Result<Evolution> {
    if cfg.substeps == 0 {
        return Err(Error::invalid("substeps must be positive"));
    }
    if grid.len() < 3 {
        return Err(Error::InvalidGrid("solver grid needs at least 3 points".into()));
    }
    let mut w = project_onto_grid(p0, grid)?;
    let volumes = cell_widths(grid);
    let times = lv.times();
    let mean0 = p0.mean();
    let min_h = grid.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    let mut report = ConservationReport {
        min_density: w.iter().zip(&volumes).map(|(m, v)| m / v).fold(f64::INFINITY, f64::min),
        ..Default::default()
    };
    let mut members = vec![snapshot(grid, &w)?];
    let mut scratch = vec![0.0; grid.len()];
    let mut step = 0usize;

    for k in 0..times.len() - 1 {
        let dt = (times[k + 1] - times[k]) / cfg.substeps as f64;
        for s in 0..cfg.substeps {
            let t0 = times[k] + s as f64 * dt;
            let t1 = if s + 1 == cfg.substeps { times[k + 1] } else { t0 + dt };
            let a0 = half_variance(lv, t0, grid);
            match cfg.scheme {
                Scheme::Explicit => {
                    let max_a = a0.iter().copied().fold(0.0, f64::max);
                    let ratio = 2.0 * max_a * dt / (min_h * min_h);
                    if ratio > CFL_LIMIT {
                        return Err(Error::Cfl { ratio });
                    }
                    Operator::build(grid, &volumes, &a0).apply(&w, &mut scratch);
                    for (wi, d) in w.iter_mut().zip(&scratch) {
                        *wi += dt * d;
                    }
                }
                Scheme::CrankNicolson if step < cfg.startup_steps => {
                    let tm = 0.5 * (t0 + t1);
                    Operator::build(grid, &volumes, &half_variance(lv, tm, grid)).solve_implicit(0.5 * dt, &mut w)?;
                    Operator::build(grid, &volumes, &half_variance(lv, t1, grid)).solve_implicit(0.5 * dt, &mut w)?;
                }
                Scheme::CrankNicolson => {
                    Operator::build(grid, &volumes, &a0).apply(&w, &mut scratch);
                    for (wi, d) in w.iter_mut().zip(&scratch) {
                        *wi += 0.5 * dt * d;
                    }
                    Operator::build(grid, &volumes, &half_variance(lv, t1, grid)).solve_implicit(0.5 * dt, &mut w)?;
                }
            }
            step += 1;
            check_step(grid, &volumes, &w, t1, mean0, &mut report)?;
        }
        members.push(snapshot(grid, &w)?);
    }
    report.steps = step;
    Ok(Evolution {
        family: PeacockFamily::new(times.to_vec(), members)?,
        conservation: report,
    })
}

fn check_step(grid: &[f64], volumes: &[f64], w: &[f64], t: f64, mean0: f64, report: &mut ConservationReport) -> Result<()> {
    for i in 0..w.len() {
        let d = w[i] / volumes[i];
        if !d.is_finite() || d < -NEGATIVITY_TOLERANCE {
            return Err(Error::NegativeDensity { t, x: grid[i], value: d });
        }
        report.min_density = report.min_density.min(d);
    }
    let mass = compensated_sum(w.iter().copied());
    let mean = compensated_sum(grid.iter().zip(w).map(|(x, m)| x * m)) / mass;
    report.max_mass_error = report.max_mass_error.max((mass - 1.0).abs());
    report.max_mean_drift = report.max_mean_drift.max((mean - mean0).abs());
    Ok(())
}

fn snapshot(grid: &[f64], w: &[f64]) -> Result<GridMeasure> {
    GridMeasure::normalized(grid.to_vec(), w.iter().map(|&m| m.max(0.0)).collect())
}

/// Extends `strikes` with their edge spacing until `[lo, hi]` is covered.
/// Multiplicative grids stay strictly positive.
pub fn padded_grid(strikes: &[f64], lo: f64, hi: f64, convention: Convention) -> Vec<f64> {
    let n = strikes.len();
    let (hl, hr) = (strikes[1] - strikes[0], strikes[n - 1] - strikes[n - 2]);
    let mut left = Vec::new();
    let mut x = strikes[0];
    while x > lo {
        let next = x - hl;
        if convention == Convention::Multiplicative && next <= 0.5 * hl {
            break;
        }
        left.push(next);
        x = next;
    }
    left.reverse();
    let mut grid = left;
    grid.extend_from_slice(strikes);
    let mut x = strikes[n - 1];
    while x < hi {
        x += hr;
        grid.push(x);
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    /// Largest `|C_model − C| / max(C, C_atm)` over interior nodes, where
    /// `C_atm` is the at-the-money price of the same time row.
    pub reprice_error_max_rel: f64,
    /// Root mean square of the same relative errors.
    pub reprice_error_l2: f64,
    pub reprice_error_max_abs: f64,
    /// Node attaining the maximum relative error.
    pub worst_node: (usize, usize),
    pub interior_nodes: usize,
    pub clamped_nodes: usize,
    pub bl_renormalization: f64,
    pub conservation: ConservationReport,
    pub solver_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roundtrip {
    pub report: RoundtripReport,
    pub local_vol: LocalVolSurface,
    pub family: PeacockFamily,
}

/// Calibrates σ from `s`, evolves the density read off the first row, and
/// reprices every node from the evolved family.
pub fn roundtrip(s: &CallSurface, dupire: &DupireConfig, cfg: &FpConfig) -> Result<Roundtrip> {
    let report = validate_surface(s);
    if let Some(v) = report.violations.first() {
        return Err(Error::invalid(format!(
            "surface fails validation with {} violations, first {:?} at (t = {}, x = {})",
            report.violations.len(),
            v.kind,
            v.time,
            v.strike
        )));
    }
    let lv = local_vol(s, dupire)?;
    let start = bl_density(s, 0)?;
    let terminal = bl_density(s, s.times().len() - 1)?.measure;
    let (mean, sd) = (terminal.mean(), terminal.variance().max(0.0).sqrt());
    let grid = padded_grid(
        s.strikes(),
        mean - cfg.padding_sd * sd,
        mean + cfg.padding_sd * sd,
        s.convention(),
    );
    let evolution = evolve(&start.measure, &lv, &grid, cfg)?;

    let strikes = s.strikes();
    let atm = s.atm_index();
    let (mut max_rel, mut max_abs, mut sq, mut count, mut worst) = (0.0f64, 0.0f64, 0.0, 0usize, (0, 0));
    for (i, m) in evolution.family.measures().iter().enumerate() {
        let model = call_values(m, strikes);
        let scale = s.price(i, atm);
        for (j, &c) in model.iter().enumerate() {
            if !s.is_interior(i, j) {
                continue;
            }
            let target = s.price(i, j);
            let abs = (c - target).abs();
            let denom = target.max(scale);
            let rel = if denom > 0.0 {
                abs / denom
            } else if abs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            if rel > max_rel {
                max_rel = rel;
                worst = (i, j);
            }
            max_abs = max_abs.max(abs);
            sq += rel * rel;
            count += 1;
        }
    }
    let clamped = lv.clamp_mask().iter().flatten().filter(|&&b| b).count();
    Ok(Roundtrip {
        report: RoundtripReport {
            reprice_error_max_rel: max_rel,
            reprice_error_l2: if count > 0 { (sq / count as f64).sqrt() } else { 0.0 },
            reprice_error_max_abs: max_abs,
            worst_node: worst,
            interior_nodes: count,
            clamped_nodes: clamped,
            bl_renormalization: start.renormalization,
            conservation: evolution.conservation,
            solver_points: grid.len(),
        },
        local_vol: lv,
        family: evolution.family,
    })
}
