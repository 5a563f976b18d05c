//! Call-price surfaces `C(t, x)` on a rectangular time × strike grid.
//!
//! Closed-form Gaussian (Bachelier) and lognormal (Black–Scholes) surfaces,
//! surfaces generated from a family of measures, static no-arbitrage
//! validation, and density extraction by second strike differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{call_values, GridMeasure, PeacockFamily, PeacockVerdict};
use crate::numerics::{check_finite, check_strictly_increasing, normal_cdf, normal_pdf, Matrix};

/// Tolerance on price inequalities and on second differences in strike.
pub const SURFACE_TOLERANCE: f64 = 1e-10;

/// Whether the state is additive (`dX = σ dW`) or multiplicative
/// (`dS = σ S dW`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    Additive,
    Multiplicative,
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(Convention::Additive),
            "multiplicative" => Ok(Convention::Multiplicative),
            other => Err(Error::Parse(format!("unknown convention '{other}'"))),
        }
    }
}

impl std::fmt::Display for Convention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Convention::Additive => "additive",
            Convention::Multiplicative => "multiplicative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSurface {
    times: Vec<f64>,
    strikes: Vec<f64>,
    prices: Matrix,
    convention: Convention,
    /// Common mean of the marginals, when known.
    forward: Option<f64>,
}

impl CallSurface {
    pub fn new(
        times: Vec<f64>,
        strikes: Vec<f64>,
        prices: Matrix,
        convention: Convention,
        forward: Option<f64>,
    ) -> Result<Self> {
        check_strictly_increasing(&times, "times")?;
        check_strictly_increasing(&strikes, "strikes")?;
        if times[0] < 0.0 {
            return Err(Error::InvalidGrid(format!("negative time {}", times[0])));
        }
        if prices.rows() != times.len() || prices.cols() != strikes.len() {
            return Err(Error::invalid(format!(
                "price matrix is {}x{}, grid is {}x{}",
                prices.rows(),
                prices.cols(),
                times.len(),
                strikes.len()
            )));
        }
        check_finite(prices.as_slice(), "prices")?;
        if convention == Convention::Multiplicative && strikes[0] <= 0.0 {
            return Err(Error::InvalidGrid("multiplicative surfaces need positive strikes".into()));
        }
        if let Some(f) = forward {
            if !f.is_finite() {
                return Err(Error::invalid("forward must be finite"));
            }
        }
        Ok(Self {
            times,
            strikes,
            prices,
            convention,
            forward,
        })
    }

    /// Surface with `C(t, x) = price(t, x)` at every node.
    pub fn from_fn(
        times: Vec<f64>,
        strikes: Vec<f64>,
        convention: Convention,
        forward: Option<f64>,
        price: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let prices = Matrix::from_fn(times.len(), strikes.len(), |i, j| price(times[i], strikes[j]));
        Self::new(times, strikes, prices, convention, forward)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn prices(&self) -> &Matrix {
        &self.prices
    }

    pub fn price(&self, i: usize, j: usize) -> f64 {
        self.prices.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.prices.row(i)
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn forward(&self) -> Option<f64> {
        self.forward
    }

    /// Same prices under another convention, revalidated.
    pub fn with_convention(self, convention: Convention) -> Result<Self> {
        Self::new(self.times, self.strikes, self.prices, convention, self.forward)
    }

    /// Known forward, or `C(t₀, x₀) + x₀` read off the deepest in-the-money
    /// call of the first row.
    pub fn forward_estimate(&self) -> f64 {
        self.forward
            .unwrap_or_else(|| self.prices.get(0, 0) + self.strikes[0])
    }

    /// Index of the strike closest to the forward.
    pub fn atm_index(&self) -> usize {
        let f = self.forward_estimate();
        let k = self.strikes.partition_point(|&x| x < f);
        if k == 0 {
            0
        } else if k == self.strikes.len() {
            k - 1
        } else if (self.strikes[k] - f).abs() < (f - self.strikes[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }

    /// Largest absolute price.
    pub fn price_scale(&self) -> f64 {
        self.prices.as_slice().iter().fold(0.0, |a: f64, &b| a.max(b.abs()))
    }

    /// Whether node `(i, j)` is at least two cells from every boundary.
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 2 && j >= 2 && i + 2 < self.times.len() && j + 2 < self.strikes.len()
    }
}

/// Slope change of the piecewise-linear interpolant of `row` at interior
/// strike `j`; equals the three-point Lagrange second derivative times the
/// trapezoidal cell width.
fn slope_change(strikes: &[f64], row: &[f64], j: usize) -> f64 {
    let right = (row[j + 1] - row[j]) / (strikes[j + 1] - strikes[j]);
    let left = (row[j] - row[j - 1]) / (strikes[j] - strikes[j - 1]);
    right - left
}

/// Second difference generalized to nonuniform strikes; equals
/// `C_{j+1} − 2C_j + C_{j−1}` on a uniform grid.
pub fn second_difference(strikes: &[f64], row: &[f64], j: usize) -> f64 {
    slope_change(strikes, row, j) * 0.5 * (strikes[j + 1] - strikes[j - 1])
}

/// Kind of static-arbitrage defect found by [`validate_surface`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `C < (forward − x)₊` (or `C < 0` when the forward is unknown).
    BelowIntrinsic,
    /// Negative second difference in strike.
    NotConvex,
    /// `C(t_{i+1}, x) < C(t_i, x)`.
    DecreasingInTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceViolation {
    pub kind: ViolationKind,
    pub time_index: usize,
    pub strike_index: usize,
    pub time: f64,
    pub strike: f64,
    /// Size of the violation (positive).
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SurfaceReport {
    pub violations: Vec<SurfaceViolation>,
}

impl SurfaceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Checks intrinsic lower bound, convexity in strike and monotonicity in
/// time at every node and lists every violation.
pub fn validate_surface(s: &CallSurface) -> SurfaceReport {
    let mut violations = Vec::new();
    let tol = SURFACE_TOLERANCE;
    let mut push = |kind, i: usize, j: usize, amount: f64| {
        violations.push(SurfaceViolation {
            kind,
            time_index: i,
            strike_index: j,
            time: s.times[i],
            strike: s.strikes[j],
            amount,
        })
    };
    for i in 0..s.times.len() {
        let row = s.row(i);
        for j in 0..s.strikes.len() {
            let floor = s.forward.map_or(0.0, |f| (f - s.strikes[j]).max(0.0));
            if row[j] < floor - tol {
                push(ViolationKind::BelowIntrinsic, i, j, floor - row[j]);
            }
        }
        for j in 1..s.strikes.len().saturating_sub(1) {
            let d2 = second_difference(&s.strikes, row, j);
            if d2 < -tol {
                push(ViolationKind::NotConvex, i, j, -d2);
            }
        }
        if i + 1 < s.times.len() {
            let next = s.row(i + 1);
            for j in 0..s.strikes.len() {
                if next[j] < row[j] - tol {
                    push(ViolationKind::DecreasingInTime, i + 1, j, row[j] - next[j]);
                }
            }
        }
    }
    SurfaceReport { violations }
}

/// Price of `E[(x0 + vol W_t − strike)₊]`.
pub fn bachelier_call(x0: f64, vol: f64, t: f64, strike: f64) -> f64 {
    let sd = vol * t.sqrt();
    if sd == 0.0 {
        return (x0 - strike).max(0.0);
    }
    let d = (x0 - strike) / sd;
    if d > 0.0 {
        // in the money: intrinsic plus the put by parity, which avoids
        // cancellation in the time value
        let put = sd * (normal_pdf(d) - d * normal_cdf(-d));
        (x0 - strike) + put.max(0.0)
    } else {
        sd * (d * normal_cdf(d) + normal_pdf(d))
    }
}

/// Price of `E[(s0 exp(vol W_t − vol² t / 2) − strike)₊]`.
pub fn black_scholes_call(s0: f64, vol: f64, t: f64, strike: f64) -> f64 {
    let sd = vol * t.sqrt();
    if sd == 0.0 || strike <= 0.0 {
        return (s0 - strike).max(0.0);
    }
    let d1 = ((s0 / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    (s0 * normal_cdf(d1) - strike * normal_cdf(d2)).max(0.0)
}

/// Gaussian call surface of `x0 + vol·W_t` (additive convention).
pub fn bachelier_surface(x0: f64, vol: f64, times: &[f64], strikes: &[f64]) -> Result<CallSurface> {
    if !(vol > 0.0) || !vol.is_finite() {
        return Err(Error::invalid(format!("volatility must be positive, got {vol}")));
    }
    CallSurface::from_fn(
        times.to_vec(),
        strikes.to_vec(),
        Convention::Additive,
        Some(x0),
        |t, k| bachelier_call(x0, vol, t, k),
    )
}

/// Lognormal call surface of geometric Brownian motion started at `s0`
/// (multiplicative convention).
pub fn black_scholes_surface(s0: f64, vol: f64, times: &[f64], strikes: &[f64]) -> Result<CallSurface> {
    if !(s0 > 0.0) || !(vol > 0.0) || !s0.is_finite() || !vol.is_finite() {
        return Err(Error::invalid(format!("spot and volatility must be positive, got {s0}, {vol}")));
    }
    if strikes.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::invalid("strikes must be positive"));
    }
    CallSurface::from_fn(
        times.to_vec(),
        strikes.to_vec(),
        Convention::Multiplicative,
        Some(s0),
        |t, k| black_scholes_call(s0, vol, t, k),
    )
}

/// `prices[i][j] = call_function(μ_{tᵢ}, xⱼ)`. Refuses families that are
/// not increasing in convex order.
pub fn surface_from_family(fam: &PeacockFamily, strikes: &[f64]) -> Result<CallSurface> {
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
    check_strictly_increasing(strikes, "strikes")?;
    let rows: Vec<Vec<f64>> = fam.measures().iter().map(|m| call_values(m, strikes)).collect();
    CallSurface::new(
        fam.times().to_vec(),
        strikes.to_vec(),
        Matrix::from_rows(rows)?,
        Convention::Additive,
        Some(fam.measures()[0].mean()),
    )
}

/// Density recovered from one row of a call surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlDensity {
    pub measure: GridMeasure,
    /// Mass carried by the interior second differences before the edge
    /// atoms and the renormalization.
    pub raw_mass: f64,
    /// Factor applied to reach unit mass after adding the edge atoms.
    pub renormalization: f64,
}

/// Extracts the marginal at `times[t_index]` from second strike differences.
///
/// Interior weights are the slope changes of the piecewise-linear price
/// interpolant (three-point Lagrange `C_xx` times the cell width). The two
/// edge strikes receive the mass the interior cannot account for: `1 + s₀`
/// on the left and `−s_last` on the right, where `s` are the outermost
/// slopes. The result is renormalized and the factor reported.
pub fn bl_density(s: &CallSurface, t_index: usize) -> Result<BlDensity> {
    if t_index >= s.times.len() {
        return Err(Error::invalid(format!("time index {t_index} out of range")));
    }
    let strikes = &s.strikes;
    let n = strikes.len();
    if n < 3 {
        return Err(Error::InvalidGrid("need at least three strikes".into()));
    }
    let row = s.row(t_index);
    let mut weights = vec![0.0; n];
    for j in 1..n - 1 {
        let d2 = second_difference(strikes, row, j);
        if d2 < -SURFACE_TOLERANCE {
            return Err(Error::NotConvex {
                strike: strikes[j],
                second_difference: d2,
            });
        }
        weights[j] = slope_change(strikes, row, j).max(0.0);
    }
    let raw_mass: f64 = weights.iter().sum();
    let first_slope = (row[1] - row[0]) / (strikes[1] - strikes[0]);
    let last_slope = (row[n - 1] - row[n - 2]) / (strikes[n - 1] - strikes[n - 2]);
    weights[0] = (1.0 + first_slope).max(0.0);
    weights[n - 1] = (-last_slope).max(0.0);
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NotNormalized { sum: total });
    }
    let measure = GridMeasure::normalized(strikes.clone(), weights)?;
    Ok(BlDensity {
        measure,
        raw_mass,
        renormalization: 1.0 / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::w1_distance;
    use crate::numerics::linspace;

    fn quad_gaussian_call(mean: f64, sd: f64, strike: f64) -> f64 {
        // quadrature oracle: midpoint rule over ±12 sd
        let n = 200_000;
        let lo = mean - 12.0 * sd;
        let h = 24.0 * sd / n as f64;
        (0..n)
            .map(|k| {
                let x = lo + (k as f64 + 0.5) * h;
                (x - strike).max(0.0) * (-(x - mean).powi(2) / (2.0 * sd * sd)).exp()
                    / (sd * (2.0 * std::f64::consts::PI).sqrt())
                    * h
            })
            .sum()
    }

    #[test]
    fn bachelier_limits_and_atm() {
        let strikes = linspace(-3.0, 3.0, 61);
        let s = bachelier_surface(0.5, 1.3, &[1e-14, 0.5, 2.0], &strikes).unwrap();
        for (j, &k) in strikes.iter().enumerate() {
            assert!((s.price(0, j) - (0.5 - k).max(0.0)).abs() < 1e-6);
        }
        let atm = bachelier_call(0.5, 1.3, 2.0, 0.5);
        let oracle = quad_gaussian_call(0.5, 1.3 * 2f64.sqrt(), 0.5);
        assert!((atm - oracle).abs() < 1e-9);
        assert!((atm - 1.3 * (2.0 / (2.0 * std::f64::consts::PI)).sqrt()).abs() < 1e-14);
        assert!(validate_surface(&s).passed());
        assert!(bachelier_surface(0.0, 0.0, &[1.0], &strikes).is_err());
    }

    #[test]
    fn black_scholes_limits_and_atm() {
        let s0 = 1.0;
        assert!((black_scholes_call(s0, 0.2, 1.0, 1e-12) - s0).abs() < 1e-11);
        assert!((black_scholes_call(s0, 1e-12, 1.0, 0.8) - 0.2).abs() < 1e-12);
        // lognormal quadrature oracle in log space
        let n = 200_000;
        let sd = 0.2;
        let h = 24.0 * sd / n as f64;
        let oracle: f64 = (0..n)
            .map(|k| {
                let z = -12.0 * sd + (k as f64 + 0.5) * h;
                let st = s0 * (z - 0.5 * sd * sd).exp();
                (st - s0).max(0.0) * normal_pdf(z / sd) / sd * h
            })
            .sum();
        let c = black_scholes_call(s0, 0.2, 1.0, s0);
        assert!((c - oracle).abs() < 1e-9);
        assert!((c - 0.07966 * s0).abs() < 1e-4);
        assert!(black_scholes_surface(1.0, 0.2, &[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn validator_finds_constructed_defects() {
        let strikes = linspace(-4.0, 4.0, 41);
        let times = linspace(0.1, 1.0, 10);
        let s = bachelier_surface(0.0, 1.0, &times, &strikes).unwrap();
        assert!(validate_surface(&s).passed());

        let mut bumped = s.prices().clone();
        bumped.set(5, 20, 1.1 * bumped.get(5, 20));
        let b = CallSurface::new(times.clone(), strikes.clone(), bumped, Convention::Additive, Some(0.0)).unwrap();
        let report = validate_surface(&b);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::NotConvex && v.time_index == 5 && v.strike_index == 20));

        let mut rows: Vec<Vec<f64>> = s.prices().iter_rows().map(<[f64]>::to_vec).collect();
        rows.swap(3, 4);
        let swapped = CallSurface::new(times, strikes, Matrix::from_rows(rows).unwrap(), Convention::Additive, None).unwrap();
        let report = validate_surface(&swapped);
        assert!(report.count(ViolationKind::DecreasingInTime) > 0);
        assert!(report
            .violations
            .iter()
            .all(|v| v.kind != ViolationKind::DecreasingInTime || v.time_index == 4));
    }

    #[test]
    fn bachelier_is_increasing_in_time() {
        let strikes = linspace(-6.0, 6.0, 121);
        let times = linspace(0.1, 1.1, 21);
        let s = bachelier_surface(0.0, 1.0, &times, &strikes).unwrap();
        for i in 1..times.len() - 1 {
            for j in 1..strikes.len() - 1 {
                let step = s.price(i + 1, j) - s.price(i, j);
                assert!(step >= -1e-15, "step {step} at ({i}, {j})");
                if s.price(i, j) - (-strikes[j]).max(0.0) > 1e-9 {
                    assert!(step > 0.0);
                }
            }
        }
    }

    #[test]
    fn family_surfaces() {
        let grid = linspace(-8.0, 8.0, 321);
        let times = vec![0.25, 0.5, 1.0];
        let fam = PeacockFamily::new(
            times.clone(),
            times
                .iter()
                .map(|t| GridMeasure::gaussian(0.0, t.sqrt(), grid.clone()).unwrap())
                .collect(),
        )
        .unwrap();
        let strikes = linspace(-4.0, 4.0, 81);
        let s = surface_from_family(&fam, &strikes).unwrap();
        let b = bachelier_surface(0.0, 1.0, &times, &strikes).unwrap();
        for i in 0..times.len() {
            for j in 0..strikes.len() {
                assert!((s.price(i, j) - b.price(i, j)).abs() < 1e-3);
            }
        }
        assert!(validate_surface(&s).passed());

        let same = PeacockFamily::new(vec![0.0, 1.0], vec![fam.measures()[0].clone(), fam.measures()[0].clone()]).unwrap();
        let s = surface_from_family(&same, &strikes).unwrap();
        assert_eq!(s.row(0), s.row(1));

        let shrinking = PeacockFamily::new(vec![0.0, 1.0], vec![fam.measures()[2].clone(), fam.measures()[0].clone()]).unwrap();
        match surface_from_family(&shrinking, &strikes) {
            Err(Error::NotPeacock { t_first, t_second, .. }) => assert_eq!((t_first, t_second), (0.0, 1.0)),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn breeden_litzenberger_on_bachelier_row() {
        let strikes = linspace(-6.0, 6.0, 201);
        let dx = strikes[1] - strikes[0];
        let s = bachelier_surface(0.0, 1.0, &[0.5, 1.0], &strikes).unwrap();
        let bl = bl_density(&s, 1).unwrap();
        let reference = GridMeasure::gaussian(0.0, 1.0, strikes.clone()).unwrap();
        let w1 = w1_distance(&bl.measure, &reference);
        // finite-difference truncation: weights are p convolved with the
        // hat function, an O(Δx²) perturbation of the trapezoid weights
        assert!(w1 < 2.0 * dx * dx, "w1 {w1} vs bound {}", 2.0 * dx * dx);
        assert!(bl.raw_mass >= 0.99 && bl.raw_mass <= 1.0, "raw mass {}", bl.raw_mass);
        assert!((bl.renormalization - 1.0).abs() < 1e-9);
        assert!(bl.measure.mean().abs() < 1e-3);
    }

    #[test]
    fn breeden_litzenberger_rejects_concave_rows() {
        let strikes = linspace(-2.0, 2.0, 21);
        let mut s = bachelier_surface(0.0, 1.0, &[1.0], &strikes).unwrap();
        s.prices.set(0, 10, s.price(0, 10) * 1.2);
        assert!(matches!(bl_density(&s, 0), Err(Error::NotConvex { .. })));
    }

    #[test]
    fn bl_inverts_surface_from_family() {
        let grid = linspace(-6.0, 6.0, 121);
        let dx = grid[1] - grid[0];
        let m = GridMeasure::from_density(grid.clone(), |x| {
            0.6 * normal_pdf((x + 0.8) / 0.7) / 0.7 + 0.4 * normal_pdf((x - 1.2) / 1.1) / 1.1
        })
        .unwrap();
        let fam = PeacockFamily::new(vec![1.0], vec![m.clone()]).unwrap();
        let s = surface_from_family(&fam, &grid).unwrap();
        let back = bl_density(&s, 0).unwrap();
        assert!(w1_distance(&back.measure, &m) < 3.0 * dx);
    }
}
