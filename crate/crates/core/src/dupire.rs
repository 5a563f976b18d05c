//! Local volatility from a call surface.
//!
//! Nodewise `σ² = 2 C_t / C_xx` (additive) or `σ² = 2 C_t / (x² C_xx)`
//! (multiplicative), with derivatives taken from Fornberg stencils that are
//! central where possible and shifted one-sided near the edges. Small
//! second derivatives are floored and σ is clamped into configured bounds;
//! every intervention is recorded.
//!
//! A row at `t = 0` holds the payoff. Its time derivative is singular, so
//! σ there is mostly clamped and carries no information; simulations and
//! forward solves should start from the first positive time.

use serde::{Deserialize, Serialize};

use crate::call_surface::{validate_surface, CallSurface, Convention, ViolationKind};
use crate::error::{Error, Result};
use crate::numerics::{check_finite, check_strictly_increasing, locate, stencil_derivative, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DupireConfig {
    /// Points per finite-difference stencil, in time and in strike.
    pub stencil_points: usize,
    /// Lower bound on `C_xx`; defaults to `1e-8 · price scale / cell²`.
    pub cxx_floor: Option<f64>,
    pub sigma_min: f64,
    /// Defaults to ten times the surface's implied scale.
    pub sigma_max: Option<f64>,
    /// `C_t` below `−ct_tolerance` at an interior node is an error when a
    /// one-sided difference of the prices confirms it; defaults to
    /// `1e-8 · price scale`.
    pub ct_tolerance: Option<f64>,
}

impl Default for DupireConfig {
    fn default() -> Self {
        Self {
            stencil_points: 7,
            cxx_floor: None,
            sigma_min: 0.0,
            sigma_max: None,
            ct_tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampReason {
    /// `C_xx` raised to the floor.
    CxxFloor,
    /// Slightly negative `C_t` set to zero.
    NegativeCt,
    SigmaMin,
    SigmaMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampEvent {
    #[serde(rename = "i")]
    pub time_index: usize,
    #[serde(rename = "j")]
    pub strike_index: usize,
    pub reason: ClampReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalVolSurface {
    times: Vec<f64>,
    strikes: Vec<f64>,
    sigma: Matrix,
    convention: Convention,
    clamps: Vec<ClampEvent>,
}

impl LocalVolSurface {
    pub fn new(
        times: Vec<f64>,
        strikes: Vec<f64>,
        sigma: Matrix,
        convention: Convention,
        clamps: Vec<ClampEvent>,
    ) -> Result<Self> {
        check_strictly_increasing(&times, "times")?;
        check_strictly_increasing(&strikes, "strikes")?;
        if sigma.rows() != times.len() || sigma.cols() != strikes.len() {
            return Err(Error::invalid(format!(
                "sigma matrix is {}x{}, grid is {}x{}",
                sigma.rows(),
                sigma.cols(),
                times.len(),
                strikes.len()
            )));
        }
        check_finite(sigma.as_slice(), "sigma")?;
        if let Some(&v) = sigma.as_slice().iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid(format!("negative volatility {v}")));
        }
        if convention == Convention::Multiplicative && strikes[0] <= 0.0 {
            return Err(Error::InvalidGrid("multiplicative surfaces need positive strikes".into()));
        }
        if let Some(c) = clamps
            .iter()
            .find(|c| c.time_index >= times.len() || c.strike_index >= strikes.len())
        {
            return Err(Error::invalid(format!(
                "clamp event ({}, {}) outside the grid",
                c.time_index, c.strike_index
            )));
        }
        Ok(Self {
            times,
            strikes,
            sigma,
            convention,
            clamps,
        })
    }

    /// Constant σ on the given grid.
    pub fn constant(times: Vec<f64>, strikes: Vec<f64>, sigma: f64, convention: Convention) -> Result<Self> {
        let m = Matrix::from_fn(times.len(), strikes.len(), |_, _| sigma);
        Self::new(times, strikes, m, convention, Vec::new())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn clamps(&self) -> &[ClampEvent] {
        &self.clamps
    }

    pub fn is_clamped(&self, i: usize, j: usize) -> bool {
        self.clamps.iter().any(|c| c.time_index == i && c.strike_index == j)
    }

    /// Boolean mask of clamped nodes.
    pub fn clamp_mask(&self) -> Vec<Vec<bool>> {
        let mut mask = vec![vec![false; self.strikes.len()]; self.times.len()];
        for c in &self.clamps {
            mask[c.time_index][c.strike_index] = true;
        }
        mask
    }

    /// Bilinear interpolation of σ, flat outside the grid.
    pub fn sigma_at(&self, t: f64, x: f64) -> f64 {
        let (i, a) = locate(&self.times, t);
        let (j, b) = locate(&self.strikes, x);
        let at = |i: usize, j: usize| {
            self.sigma
                .get(i.min(self.times.len() - 1), j.min(self.strikes.len() - 1))
        };
        let lo = (1.0 - b) * at(i, j) + b * at(i, j + 1);
        let hi = (1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1);
        (1.0 - a) * lo + a * hi
    }

    /// Absolute diffusion coefficient: `σ(t, x)` or `σ(t, x)·x`.
    pub fn diffusion(&self, t: f64, x: f64) -> f64 {
        let s = self.sigma_at(t, x);
        match self.convention {
            Convention::Additive => s,
            Convention::Multiplicative => s * x.abs(),
        }
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.as_slice().iter().fold(0.0, |a: f64, &b| a.max(b))
    }
}

/// Global volatility scale read from the at-the-money price growth:
/// `σ² ≈ 2π (C_L² − C_0²) / (t_L − t_0)`, divided by the forward in the
/// multiplicative convention.
pub fn implied_scale(s: &CallSurface) -> f64 {
    let times = s.times();
    let j = s.atm_index();
    let last = times.len() - 1;
    if last == 0 {
        return 0.0;
    }
    let (c0, c1) = (s.price(0, j), s.price(last, j));
    let f = s.forward_estimate();
    let intrinsic = (f - s.strikes()[j]).max(0.0);
    let (c0, c1) = (c0 - intrinsic, c1 - intrinsic);
    let var = 2.0 * std::f64::consts::PI * (c1 * c1 - c0 * c0) / (times[last] - times[0]);
    let vol = var.max(0.0).sqrt();
    match s.convention() {
        Convention::Additive => vol,
        Convention::Multiplicative => vol / f.abs().max(f64::MIN_POSITIVE),
    }
}

struct Resolved {
    points: usize,
    cxx_floor: f64,
    sigma_min: f64,
    sigma_max: f64,
    ct_tolerance: f64,
}

fn resolve(s: &CallSurface, cfg: &DupireConfig) -> Result<Resolved> {
    if cfg.stencil_points < 3 {
        return Err(Error::invalid("stencil_points must be at least 3"));
    }
    let strikes = s.strikes();
    let (nt, nx) = (s.times().len(), strikes.len());
    if nt < 2 || nx < 3 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 times and 3 strikes, got {nt} and {nx}"
        )));
    }
    let scale = s.price_scale();
    let cell = (strikes[nx - 1] - strikes[0]) / (nx - 1) as f64;
    let sigma_max = match cfg.sigma_max {
        Some(v) => v,
        None => {
            let v = 10.0 * implied_scale(s);
            if v > 0.0 {
                v
            } else {
                f64::INFINITY
            }
        }
    };
    let r = Resolved {
        points: cfg.stencil_points,
        cxx_floor: cfg.cxx_floor.unwrap_or(1e-8 * scale / (cell * cell)),
        sigma_min: cfg.sigma_min,
        sigma_max,
        ct_tolerance: cfg.ct_tolerance.unwrap_or(1e-8 * scale),
    };
    if !(r.sigma_min >= 0.0) || !(r.sigma_max >= r.sigma_min) || !(r.cxx_floor > 0.0) || !(r.ct_tolerance >= 0.0) {
        return Err(Error::invalid(format!(
            "inconsistent bounds: sigma in [{}, {}], cxx_floor {}, ct_tolerance {}",
            r.sigma_min, r.sigma_max, r.cxx_floor, r.ct_tolerance
        )));
    }
    Ok(r)
}

fn check_valid(s: &CallSurface) -> Result<()> {
    let report = validate_surface(s);
    match report.violations.first() {
        None => Ok(()),
        Some(v) => Err(match v.kind {
            ViolationKind::NotConvex => Error::NotConvex {
                strike: v.strike,
                second_difference: -v.amount,
            },
            ViolationKind::DecreasingInTime => Error::NegativeTimeDerivative {
                t: v.time,
                x: v.strike,
                value: -v.amount,
            },
            ViolationKind::BelowIntrinsic => Error::invalid(format!(
                "price below intrinsic value by {:e} at (t = {}, x = {})",
                v.amount, v.time, v.strike
            )),
        }),
    }
}

/// `C_t` at node `(i, j)`.
pub fn time_derivative(s: &CallSurface, points: usize, i: usize, j: usize) -> f64 {
    stencil_derivative(s.times(), i, points, 1, |k| s.price(k, j))
}

/// `C_xx` at node `(i, j)`.
pub fn strike_second_derivative(s: &CallSurface, points: usize, i: usize, j: usize) -> f64 {
    let row = s.row(i);
    stencil_derivative(s.strikes(), j, points, 2, |k| row[k])
}

/// Most negative one-sided difference quotient of the prices in time at
/// node `(i, j)`.
fn first_order_decrease(s: &CallSurface, i: usize, j: usize) -> f64 {
    let t = s.times();
    let mut worst = f64::INFINITY;
    if i > 0 {
        worst = worst.min((s.price(i, j) - s.price(i - 1, j)) / (t[i] - t[i - 1]));
    }
    if i + 1 < t.len() {
        worst = worst.min((s.price(i + 1, j) - s.price(i, j)) / (t[i + 1] - t[i]));
    }
    worst
}

fn calibrate(s: &CallSurface, cfg: &DupireConfig) -> Result<LocalVolSurface> {
    check_valid(s)?;
    let r = resolve(s, cfg)?;
    let (times, strikes) = (s.times(), s.strikes());
    let mut sigma = Matrix::zeros(times.len(), strikes.len());
    let mut clamps = Vec::new();
    for i in 0..times.len() {
        for j in 0..strikes.len() {
            let mut push = |reason| {
                clamps.push(ClampEvent {
                    time_index: i,
                    strike_index: j,
                    reason,
                })
            };
            let mut ct = time_derivative(s, r.points, i, j);
            if ct < 0.0 {
                // a negative high-order estimate is calendar arbitrage only
                // when the prices themselves decrease; otherwise it is
                // stencil ringing (e.g. next to a t = 0 row) and is clamped
                if s.is_interior(i, j) && ct < -r.ct_tolerance && first_order_decrease(s, i, j) < -r.ct_tolerance {
                    return Err(Error::NegativeTimeDerivative {
                        t: times[i],
                        x: strikes[j],
                        value: ct,
                    });
                }
                push(ClampReason::NegativeCt);
                ct = 0.0;
            }
            let mut cxx = strike_second_derivative(s, r.points, i, j);
            if cxx < r.cxx_floor {
                push(ClampReason::CxxFloor);
                cxx = r.cxx_floor;
            }
            let x2 = match s.convention() {
                Convention::Additive => 1.0,
                Convention::Multiplicative => strikes[j] * strikes[j],
            };
            let mut v = (2.0 * ct / (x2 * cxx)).sqrt();
            if v < r.sigma_min {
                push(ClampReason::SigmaMin);
                v = r.sigma_min;
            } else if v > r.sigma_max {
                push(ClampReason::SigmaMax);
                v = r.sigma_max;
            }
            sigma.set(i, j, v);
        }
    }
    LocalVolSurface::new(times.to_vec(), strikes.to_vec(), sigma, s.convention(), clamps)
}

/// Additive Dupire formula `σ² = 2 C_t / C_xx`.
pub fn local_vol_additive(s: &CallSurface, cfg: &DupireConfig) -> Result<LocalVolSurface> {
    if s.convention() != Convention::Additive {
        return Err(Error::invalid("surface is not in the additive convention"));
    }
    calibrate(s, cfg)
}

/// Multiplicative Dupire formula `σ² = 2 C_t / (x² C_xx)`.
pub fn local_vol_multiplicative(s: &CallSurface, cfg: &DupireConfig) -> Result<LocalVolSurface> {
    if s.convention() != Convention::Multiplicative {
        return Err(Error::invalid("surface is not in the multiplicative convention"));
    }
    if s.strikes()[0] <= 0.0 {
        return Err(Error::InvalidGrid("multiplicative calibration needs positive strikes".into()));
    }
    calibrate(s, cfg)
}

/// Dispatches on the surface's convention.
pub fn local_vol(s: &CallSurface, cfg: &DupireConfig) -> Result<LocalVolSurface> {
    match s.convention() {
        Convention::Additive => local_vol_additive(s, cfg),
        Convention::Multiplicative => local_vol_multiplicative(s, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Largest `|C_t − ½σ²(x²)C_xx|` over interior, unclamped nodes.
    pub max_abs: f64,
    /// Root mean square over the same nodes.
    pub l2: f64,
    /// Largest residual over interior clamped nodes.
    pub max_abs_clamped: f64,
    pub interior_nodes: usize,
    pub clamped_interior_nodes: usize,
    /// Nodewise residuals on the full grid.
    pub residuals: Matrix,
}

/// Residual of the forward equation `C_t = ½ σ² (x²) C_xx` at every node,
/// using the same stencils as calibration.
pub fn implied_diffusion_check(s: &CallSurface, lv: &LocalVolSurface, stencil_points: usize) -> Result<ResidualReport> {
    if s.times() != lv.times() || s.strikes() != lv.strikes() {
        return Err(Error::invalid("surface and local volatility grids differ"));
    }
    if stencil_points < 3 {
        return Err(Error::invalid("stencil_points must be at least 3"));
    }
    let (nt, nx) = (s.times().len(), s.strikes().len());
    if nt < 2 || nx < 3 {
        return Err(Error::InvalidGrid("need at least 2 times and 3 strikes".into()));
    }
    let mask = lv.clamp_mask();
    let mut residuals = Matrix::zeros(nt, nx);
    let (mut max_abs, mut sq, mut count, mut max_clamped, mut clamped) = (0.0f64, 0.0, 0usize, 0.0f64, 0usize);
    for i in 0..nt {
        for j in 0..nx {
            let x = s.strikes()[j];
            let x2 = match s.convention() {
                Convention::Additive => 1.0,
                Convention::Multiplicative => x * x,
            };
            let sig = lv.sigma().get(i, j);
            let r = time_derivative(s, stencil_points, i, j)
                - 0.5 * sig * sig * x2 * strike_second_derivative(s, stencil_points, i, j);
            residuals.set(i, j, r);
            if !s.is_interior(i, j) {
                continue;
            }
            if mask[i][j] {
                clamped += 1;
                max_clamped = max_clamped.max(r.abs());
            } else {
                count += 1;
                max_abs = max_abs.max(r.abs());
                sq += r * r;
            }
        }
    }
    Ok(ResidualReport {
        max_abs,
        l2: if count > 0 { (sq / count as f64).sqrt() } else { 0.0 },
        max_abs_clamped: max_clamped,
        interior_nodes: count,
        clamped_interior_nodes: clamped,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::call_surface::{bachelier_call, bachelier_surface, black_scholes_call, black_scholes_surface};
    use crate::numerics::linspace;

    fn interior_errors(lv: &LocalVolSurface, s: &CallSurface, target: impl Fn(f64, f64) -> f64) -> (f64, usize) {
        let mask = lv.clamp_mask();
        let mut worst = 0.0f64;
        let mut n = 0;
        for i in 0..lv.times().len() {
            for j in 0..lv.strikes().len() {
                if s.is_interior(i, j) && !mask[i][j] {
                    n += 1;
                    let e = (lv.sigma().get(i, j) - target(lv.times()[i], lv.strikes()[j])).abs();
                    worst = worst.max(e);
                }
            }
        }
        (worst, n)
    }

    fn acceptance_surface() -> CallSurface {
        bachelier_surface(0.0, 1.0, &linspace(0.1, 1.1, 101), &linspace(-6.0, 6.0, 201)).unwrap()
    }

    #[test]
    fn bachelier_recovers_unit_vol() {
        let s = acceptance_surface();
        let lv = local_vol_additive(&s, &DupireConfig::default()).unwrap();
        let (err, n) = interior_errors(&lv, &s, |_, _| 1.0);
        assert!(err < 1e-3, "max interior error {err}");
        assert!(n > 5000, "only {n} reliable interior nodes");
        assert!(lv.sigma().as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn time_varying_variance() {
        // N(0, t²): σ² = d(t²)/dt = 2t
        let times = linspace(0.5, 1.5, 51);
        let strikes = linspace(-6.0, 6.0, 241);
        let s = CallSurface::from_fn(times, strikes, Convention::Additive, Some(0.0), |t, k| {
            bachelier_call(0.0, 1.0, t * t, k)
        })
        .unwrap();
        let lv = local_vol_additive(&s, &DupireConfig::default()).unwrap();
        let mask = lv.clamp_mask();
        for i in 0..lv.times().len() {
            for j in 0..lv.strikes().len() {
                if s.is_interior(i, j) && !mask[i][j] {
                    let target = (2.0 * lv.times()[i]).sqrt();
                    assert!((lv.sigma().get(i, j) / target - 1.0).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn flat_surface_gives_zero_vol() {
        let strikes = linspace(-3.0, 3.0, 31);
        let s = CallSurface::from_fn(linspace(0.0, 1.0, 11), strikes, Convention::Additive, Some(0.0), |_, k| {
            bachelier_call(0.0, 1.0, 1.0, k)
        })
        .unwrap();
        let lv = local_vol_additive(&s, &DupireConfig::default()).unwrap();
        assert!(lv.sigma().as_slice().iter().all(|&v| v == 0.0));
        let res = implied_diffusion_check(&s, &lv, 7).unwrap();
        assert_eq!(res.max_abs, 0.0);
    }

    #[test]
    fn black_scholes_levels() {
        for (vol, tol) in [(0.2, 2e-3), (0.5, 5e-3)] {
            let times = linspace(0.1, 1.1, 51);
            let strikes = linspace(0.2, 3.0, 281);
            let s = black_scholes_surface(1.0, vol, &times, &strikes).unwrap();
            let lv = local_vol_multiplicative(&s, &DupireConfig::default()).unwrap();
            let (err, n) = interior_errors(&lv, &s, |_, _| vol);
            assert!(err < tol, "vol {vol}: error {err}");
            assert!(n > 1000);
        }
    }

    #[test]
    fn lognormal_time_change() {
        // log S_t ~ N(−v/2, v) with v = t²: σ² = v′(t) = 2t
        let times = linspace(0.5, 1.0, 51);
        let strikes = linspace(0.1, 4.0, 391);
        let s = CallSurface::from_fn(times, strikes, Convention::Multiplicative, Some(1.0), |t, k| {
            black_scholes_call(1.0, 1.0, t * t, k)
        })
        .unwrap();
        let lv = local_vol_multiplicative(&s, &DupireConfig::default()).unwrap();
        let (_, n) = interior_errors(&lv, &s, |_, _| 0.0);
        assert!(n > 1000);
        let mask = lv.clamp_mask();
        for i in 0..lv.times().len() {
            for j in 0..lv.strikes().len() {
                if s.is_interior(i, j) && !mask[i][j] {
                    let target = (2.0 * lv.times()[i]).sqrt();
                    assert!((lv.sigma().get(i, j) / target - 1.0).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn convention_and_sign_checks() {
        let s = acceptance_surface();
        assert!(local_vol_multiplicative(&s, &DupireConfig::default()).is_err());
        let bs = black_scholes_surface(1.0, 0.2, &[0.5, 1.0], &[0.5, 1.0, 1.5]).unwrap();
        assert!(local_vol_additive(&bs, &DupireConfig::default()).is_err());

        let times = linspace(0.1, 1.1, 11);
        let strikes = linspace(-3.0, 3.0, 31);
        let shrinking = CallSurface::from_fn(times, strikes, Convention::Additive, Some(0.0), |t, k| {
            bachelier_call(0.0, 1.0, 1.2 - t, k)
        })
        .unwrap();
        assert!(matches!(
            local_vol_additive(&shrinking, &DupireConfig::default()),
            Err(Error::NegativeTimeDerivative { .. })
        ));
    }

    #[test]
    fn surface_starting_at_zero_calibrates() {
        // the t = 0 row is the payoff; its kink in time makes high-order
        // time stencils ring at the next rows
        let s = bachelier_surface(0.0, 0.8, &linspace(0.0, 1.0, 51), &linspace(-5.0, 5.0, 101)).unwrap();
        let lv = local_vol_additive(&s, &DupireConfig::default()).unwrap();
        let i = 25;
        for j in 40..=60 {
            assert!((lv.sigma().get(i, j) - 0.8).abs() < 1e-3, "{}", lv.sigma().get(i, j));
        }
        assert!(lv.clamps().iter().any(|c| c.reason == ClampReason::NegativeCt));
    }

    #[test]
    fn self_consistency_and_doubled_sigma() {
        let s = acceptance_surface();
        let lv = local_vol_additive(&s, &DupireConfig::default()).unwrap();
        let res = implied_diffusion_check(&s, &lv, 7).unwrap();
        assert!(res.max_abs < 1e-6 * s.price_scale(), "residual {}", res.max_abs);
        assert!(res.clamped_interior_nodes > 0);

        let doubled = Matrix::from_fn(s.times().len(), s.strikes().len(), |i, j| 2.0 * lv.sigma().get(i, j));
        let lv2 = LocalVolSurface::new(s.times().to_vec(), s.strikes().to_vec(), doubled, Convention::Additive, lv.clamps().to_vec()).unwrap();
        let res2 = implied_diffusion_check(&s, &lv2, 7).unwrap();
        let j = s.atm_index();
        for i in 2..s.times().len() - 2 {
            let ct = time_derivative(&s, 7, i, j);
            let r = res2.residuals.get(i, j);
            assert!((r + 3.0 * ct).abs() < 1e-3 * ct, "node {i}: {r} vs {ct}");
        }
    }

    #[test]
    fn scale_and_translation() {
        let times = linspace(0.2, 1.0, 41);
        let base = linspace(-5.0, 5.0, 201);
        let c = 1.7;
        let lv1 = local_vol_additive(&bachelier_surface(0.0, 0.8, &times, &base).unwrap(), &DupireConfig::default()).unwrap();
        let scaled: Vec<f64> = base.iter().map(|x| c * x).collect();
        let lv2 = local_vol_additive(&bachelier_surface(0.0, 0.8 * c, &times, &scaled).unwrap(), &DupireConfig::default()).unwrap();
        let shifted: Vec<f64> = base.iter().map(|x| x + 3.25).collect();
        let lv3 = local_vol_additive(&bachelier_surface(3.25, 0.8, &times, &shifted).unwrap(), &DupireConfig::default()).unwrap();
        let (m1, m2) = (lv1.clamp_mask(), lv2.clamp_mask());
        for i in 2..times.len() - 2 {
            for j in 2..base.len() - 2 {
                if !m1[i][j] && !m2[i][j] {
                    let (a, b) = (lv1.sigma().get(i, j), lv2.sigma().get(i, j));
                    assert!((b / (c * a) - 1.0).abs() < 0.01);
                }
                if !m1[i][j] {
                    assert!((lv1.sigma().get(i, j) - lv3.sigma().get(i, j)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn residual_shrinks_under_refinement() {
        // three-point stencils leave a visible truncation residual when σ
        // comes from a coarser calibration; refine Δx and compare
        let times = linspace(0.5, 1.5, 41);
        let residual = |n: usize| {
            let s = bachelier_surface(0.0, 1.0, &times, &linspace(-4.0, 4.0, n)).unwrap();
            let lv = LocalVolSurface::constant(times.clone(), s.strikes().to_vec(), 1.0, Convention::Additive).unwrap();
            implied_diffusion_check(&s, &lv, 3).unwrap().max_abs
        };
        let (coarse, fine) = (residual(41), residual(81));
        assert!(coarse / fine >= 3.0, "{coarse} -> {fine}");
    }

    #[test]
    fn sigma_interpolation() {
        let lv = LocalVolSurface::new(
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
            Convention::Additive,
            vec![],
        )
        .unwrap();
        assert_eq!(lv.sigma_at(0.5, 0.5), 2.5);
        assert_eq!(lv.sigma_at(-1.0, -1.0), 1.0);
        assert_eq!(lv.sigma_at(2.0, 2.0), 4.0);
    }
}
