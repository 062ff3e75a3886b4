//! Homogeneous (mean-field) reduction of the cascade.
//!
//! With every bank lending `zJ` in total and a surviving fraction `p`, the
//! next-round surviving fraction is `F(p) = 1 - CDF(a - b p)` where
//! `a = (mu_L - mu_g) / sigma` and `b = zJ / sigma`. Above the critical
//! coupling `b_c = 1 / pdf(0)` the map can have three fixed points and the
//! equilibrium depends on history.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::LocationScaleDistribution;
use crate::error::{Error, Result};

/// Convergence tolerance of [`solve_fixed_point`].
pub const FIXED_POINT_TOL: f64 = 1e-12;
/// Bisection tolerance for roots of `p - F(p)`.
pub const ROOT_TOL: f64 = 1e-12;
/// Slope band `|F' - 1|` and `a`-distance treated as tangency.
pub const TANGENCY_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Uniform grid used for the sign-change root scan.
pub const SCAN_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub a: f64,
    pub b: f64,
    pub dist: LocationScaleDistribution,
}

impl MeanFieldParams {
    pub fn new(a: f64, b: f64, dist: LocationScaleDistribution) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::invalid("a", format!("must be finite, got {a}")));
        }
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::invalid("b", format!("must satisfy b >= 0, got {b}")));
        }
        Ok(MeanFieldParams { a, b, dist })
    }

    pub fn normal(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, LocationScaleDistribution::Normal)
    }

    /// Maps simulator balance-sheet inputs onto `(a, b)`:
    /// `sigma = sqrt(sigma_A^2 + sigma_L^2)`, `b = theta mu_A / sigma` and
    /// `a - b = (mu_L - mu_A) / sigma`.
    pub fn from_balance_sheet(
        mu_a: f64,
        sigma_a: f64,
        mu_l: f64,
        sigma_l: f64,
        theta: f64,
        dist: LocationScaleDistribution,
    ) -> Result<Self> {
        let sigma = sigma_a.hypot(sigma_l);
        if !(sigma > 0.0) {
            return Err(Error::invalid("sigma", "combined scale must be positive"));
        }
        let b = theta * mu_a / sigma;
        Self::new(b + (mu_l - mu_a) / sigma, b, dist)
    }

    /// `F(p) = 1 - CDF(a - b p)`.
    pub fn iterate(&self, p: f64) -> f64 {
        self.dist.std_sf(self.a - self.b * p)
    }

    /// `F'(x) = b pdf(a - b x)`.
    pub fn slope(&self, x: f64) -> f64 {
        if self.b == 0.0 {
            return 0.0;
        }
        self.b * self.dist.std_pdf(self.a - self.b * x)
    }

    fn residual(&self, p: f64) -> f64 {
        p - self.iterate(p)
    }
}

pub fn iterate_map(params: &MeanFieldParams, p: f64) -> f64 {
    params.iterate(p)
}

/// Branching number `n = F'(x)`: expected follow-on distresses per distress.
pub fn branching_number(params: &MeanFieldParams, x: f64) -> f64 {
    params.slope(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub p: f64,
    pub iterations: usize,
}

/// Iterates `p_r = F(p_{r-1})` from `p0` until successive values differ by
/// at most `tol`. The map is monotone and bounded, so the orbit converges to
/// the nearest stable (or tangent) root in the direction of travel.
pub fn solve_fixed_point(params: &MeanFieldParams, p0: f64, tol: f64, max_iter: usize) -> Result<Convergence> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::invalid("p0", format!("must lie in [0, 1], got {p0}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter", "must be at least 1"));
    }
    let mut p = p0;
    let mut step = f64::INFINITY;
    for iterations in 1..=max_iter {
        let next = params.iterate(p);
        step = (next - p).abs();
        p = next;
        if step <= tol {
            return Ok(Convergence { p, iterations });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_step: step,
    })
}

/// [`solve_fixed_point`] with the default tolerance and iteration cap.
///
/// At a tangency the orbit creeps towards the double root too slowly to
/// meet the tolerance. The map is monotone, so the limit is the first root
/// in the direction of travel, which is then taken from the root scan.
pub fn equilibrium(params: &MeanFieldParams, p0: f64) -> Result<f64> {
    match solve_fixed_point(params, p0, FIXED_POINT_TOL, DEFAULT_MAX_ITER) {
        Ok(c) => Ok(c.p),
        Err(Error::NonConvergence { iterations, last_step }) => {
            let roots = classify_fixed_points(params).roots;
            let limit = if params.iterate(p0) < p0 {
                roots.iter().rev().find(|r| r.p <= p0)
            } else {
                roots.iter().find(|r| r.p >= p0)
            };
            limit
                .map(|r| r.p)
                .ok_or(Error::NonConvergence { iterations, last_step })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    /// `|F' - 1| <= TANGENCY_TOL`: a double root, attracting from one side.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Monostable,
    Bistable,
    /// `a` sits on the lower bound `a1`: the two lower roots have merged.
    TangentLower,
    /// `a` sits on the upper bound `a2`: the two upper roots have merged.
    TangentUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub p: f64,
    pub slope: f64,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub params: MeanFieldParams,
    /// Strictly increasing in `p`.
    pub roots: Vec<Root>,
    pub regime: Regime,
    /// Extrema `(x1, x2)` of `p - F(p)`, present when `b > b_c`.
    pub x_extrema: Option<(f64, f64)>,
    /// Bistable wedge `(a1, a2)`, present when `b > b_c`.
    pub bounds: Option<(f64, f64)>,
    pub b_critical: f64,
}

impl FixedPointSolution {
    pub fn stable_roots(&self) -> impl Iterator<Item = &Root> {
        self.roots.iter().filter(|r| r.stability == Stability::Stable)
    }
}

/// Bistable wedge `(a1, a2)` for coupling `b`, from the tangency condition
/// `b pdf(a - b x) = 1` together with `x = F(x)`. `None` when `b <= b_c`.
pub fn hysteresis_bounds(b: f64, dist: &LocationScaleDistribution) -> Option<(f64, f64)> {
    if !(b > dist.critical_coupling()) {
        return None;
    }
    let s = dist.tangency_offset(b)?;
    let a1 = b * dist.std_sf(s) + s;
    let a2 = b * dist.std_cdf(s) - s;
    Some((a1, a2))
}

/// Extrema `(x1, x2) = ((a - s)/b, (a + s)/b)` of `p - F(p)`; `x1` is the
/// local maximum.
pub fn residual_extrema(params: &MeanFieldParams) -> Option<(f64, f64)> {
    if !(params.b > params.dist.critical_coupling()) {
        return None;
    }
    let s = params.dist.tangency_offset(params.b)?;
    Some(((params.a - s) / params.b, (params.a + s) / params.b))
}

fn bisect(params: &MeanFieldParams, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = params.residual(lo);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let g_mid = params.residual(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn scan_grid(extrema: Option<(f64, f64)>) -> (Vec<f64>, Vec<usize>) {
    let mut grid: Vec<f64> = (0..=SCAN_POINTS).map(|k| k as f64 / SCAN_POINTS as f64).collect();
    let inside: Vec<f64> = extrema
        .map(|(x1, x2)| vec![x1, x2])
        .unwrap_or_default()
        .into_iter()
        .filter(|x| *x > 0.0 && *x < 1.0)
        .collect();
    grid.extend(&inside);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    // Indices splitting the grid into pieces on which g is monotone.
    let mut cuts = vec![0];
    cuts.extend(inside.iter().map(|x| grid.partition_point(|g| g < x)));
    cuts.push(grid.len() - 1);
    cuts.dedup();
    (grid, cuts)
}

fn push_root(roots: &mut Vec<f64>, r: f64) {
    if roots.last().is_none_or(|last| r - last > ROOT_TOL) {
        roots.push(r);
    }
}

/// Sign-change scan of `g(p) = p - F(p)` on a uniform grid (with the
/// extrema inserted as breakpoints), refined by bisection.
///
/// `g` is monotone between consecutive extrema, so on each such piece the
/// bracketing grid cell is located by binary search over grid indices. This
/// finds the same cells as a linear pass in logarithmic time.
fn scan_roots(params: &MeanFieldParams, extrema: Option<(f64, f64)>) -> Vec<f64> {
    let (grid, cuts) = scan_grid(extrema);
    let g = |k: usize| params.residual(grid[k]);
    let mut roots = Vec::new();
    for piece in cuts.windows(2) {
        let (mut lo, mut hi) = (piece[0], piece[1]);
        let (g_lo, g_hi) = (g(lo), g(hi));
        if g_lo == 0.0 {
            push_root(&mut roots, grid[lo]);
            continue;
        }
        if g_hi == 0.0 || (g_lo < 0.0) == (g_hi < 0.0) {
            continue;
        }
        let mut exact = None;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let g_mid = g(mid);
            if g_mid == 0.0 {
                exact = Some(grid[mid]);
                break;
            }
            if (g_mid < 0.0) == (g_lo < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        push_root(&mut roots, exact.unwrap_or_else(|| bisect(params, grid[lo], grid[hi])));
    }
    if let Some(&last) = cuts.last() {
        if g(last) == 0.0 {
            push_root(&mut roots, grid[last]);
        }
    }
    roots
}

fn make_root(params: &MeanFieldParams, p: f64) -> Root {
    let slope = params.slope(p);
    let stability = if (slope - 1.0).abs() <= TANGENCY_TOL {
        Stability::Marginal
    } else if slope < 1.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    Root { p, slope, stability }
}

/// Finds and labels every fixed point of the map on `[0, 1]`.
pub fn classify_fixed_points(params: &MeanFieldParams) -> FixedPointSolution {
    let b_critical = params.dist.critical_coupling();
    let bounds = hysteresis_bounds(params.b, &params.dist);
    let x_extrema = residual_extrema(params);
    let found = scan_roots(params, x_extrema);

    let tangent = match (bounds, x_extrema) {
        (Some((a1, a2)), Some((x1, x2))) => {
            let d1 = (params.a - a1).abs();
            let d2 = (params.a - a2).abs();
            if d1 <= TANGENCY_TOL && d1 <= d2 {
                Some((Regime::TangentLower, x1, x2))
            } else if d2 <= TANGENCY_TOL {
                Some((Regime::TangentUpper, x2, x1))
            } else {
                None
            }
        }
        _ => None,
    };

    let (roots, regime) = match tangent {
        Some((regime, x_double, x_other)) => {
            // Keep the root on the far side of the other extremum; merge
            // everything near the touching extremum into one double root.
            let far = found.iter().copied().find(|&r| match regime {
                Regime::TangentLower => r > x_other,
                _ => r < x_other,
            });
            let mut ps = vec![x_double.clamp(0.0, 1.0)];
            if let Some(r) = far {
                if (r - x_double).abs() > TANGENCY_TOL {
                    ps.push(r);
                }
            }
            ps.sort_by(f64::total_cmp);
            let mut roots: Vec<Root> = ps.into_iter().map(|p| make_root(params, p)).collect();
            let double = roots
                .iter_mut()
                .min_by(|l, r| (l.p - x_double).abs().total_cmp(&(r.p - x_double).abs()))
                .expect("at least the double root");
            double.stability = Stability::Marginal;
            (roots, regime)
        }
        None => {
            let roots: Vec<Root> = found.into_iter().map(|p| make_root(params, p)).collect();
            let regime = if roots.len() == 3 {
                Regime::Bistable
            } else {
                Regime::Monostable
            };
            (roots, regime)
        }
    };

    FixedPointSolution {
        params: *params,
        roots,
        regime,
        x_extrema,
        bounds,
        b_critical,
    }
}

/// Solves `a = -E / sigma + b p` for `a`.
pub fn capital_relation(capital: f64, sigma: f64, b: f64, p: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
    }
    Ok(-capital / sigma + b * p)
}

/// Capital (in units of `sigma`) needed to move a collapsed system from the
/// upper bound `a2` back to the lower bound `a1` at fixed `b`.
pub fn recapitalization_gap(b: f64, dist: &LocationScaleDistribution) -> Option<f64> {
    hysteresis_bounds(b, dist).map(|(a1, a2)| a2 - a1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisCurves {
    pub b: f64,
    pub a: Vec<f64>,
    /// Swept upward in `a`, starting from `p = 1`.
    pub forward: Vec<f64>,
    /// Swept downward in `a`, starting from `p = 0`.
    pub backward: Vec<f64>,
}

impl HysteresisCurves {
    /// First `a` on the forward sweep where `p` falls below `threshold`.
    pub fn forward_jump(&self, threshold: f64) -> Option<f64> {
        self.a
            .iter()
            .zip(&self.forward)
            .find(|(_, p)| **p < threshold)
            .map(|(a, _)| *a)
    }

    /// Last `a` (scanning downward) on the backward sweep where `p` rises
    /// above `threshold`.
    pub fn backward_jump(&self, threshold: f64) -> Option<f64> {
        self.a
            .iter()
            .zip(&self.backward)
            .rev()
            .find(|(_, p)| **p > threshold)
            .map(|(a, _)| *a)
    }
}

/// Quasi-static sweep of `a` in both directions with warm starts, exposing
/// the path dependence of the equilibrium.
pub fn hysteresis_sweep(b: f64, a_grid: &[f64], dist: &LocationScaleDistribution) -> Result<HysteresisCurves> {
    if a_grid.len() < 2 {
        return Err(Error::invalid("a_grid", "needs at least two points"));
    }
    if a_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("a_grid", "must be strictly ascending"));
    }
    let solve = |a: f64, p0: f64| -> Result<f64> {
        let params = MeanFieldParams::new(a, b, *dist)?;
        equilibrium(&params, p0)
    };

    let mut forward = Vec::with_capacity(a_grid.len());
    let mut p = 1.0;
    for &a in a_grid {
        p = solve(a, p)?;
        forward.push(p);
    }

    let mut backward = vec![0.0; a_grid.len()];
    let mut p = 0.0;
    for (k, &a) in a_grid.iter().enumerate().rev() {
        p = solve(a, p)?;
        backward[k] = p;
    }

    Ok(HysteresisCurves {
        b,
        a: a_grid.to_vec(),
        forward,
        backward,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub a_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    pub p0: f64,
    /// `values[i][j]` is the equilibrium at `(a_grid[i], b_grid[j])`.
    pub values: Vec<Vec<f64>>,
}

impl PhaseDiagram {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Long-format `(a, b, p)` triples in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.a_grid.iter().enumerate().flat_map(move |(i, &a)| {
            self.b_grid
                .iter()
                .enumerate()
                .map(move |(j, &b)| (a, b, self.values[i][j]))
        })
    }
}

/// Equilibrium surviving fraction on an `(a, b)` grid from a fixed `p0`.
/// Cells are solved in parallel; output order follows the grids.
pub fn phase_diagram(
    a_grid: &[f64],
    b_grid: &[f64],
    p0: f64,
    dist: &LocationScaleDistribution,
) -> Result<PhaseDiagram> {
    if a_grid.is_empty() || b_grid.is_empty() {
        return Err(Error::invalid("grid", "a and b grids must be nonempty"));
    }
    let values = a_grid
        .par_iter()
        .map(|&a| {
            b_grid
                .iter()
                .map(|&b| equilibrium(&MeanFieldParams::new(a, b, *dist)?, p0))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseDiagram {
        a_grid: a_grid.to_vec(),
        b_grid: b_grid.to_vec(),
        p0,
        values,
    })
}

/// Critical interbank fraction `theta_c = sigma_frac * b_c`.
pub fn critical_theta(sigma_frac: f64, dist: &LocationScaleDistribution) -> f64 {
    sigma_frac * dist.critical_coupling()
}

/// Smallest leverage `gamma = mu_E / mu_A` keeping `a <= a2`, for
/// interbank fraction `theta` and shock scale `sigma = sigma_frac * mu_A`:
///
/// `gamma_min = sigma_frac * s + theta * CDF(-s)` with `s` the tangency
/// offset at `b = theta / sigma_frac`. Returns 0 for `theta <= theta_c`,
/// where no collapse exists and the criterion sets no floor.
pub fn leverage_min(theta: f64, sigma_frac: f64, dist: &LocationScaleDistribution) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid("theta", format!("must lie in [0, 1], got {theta}")));
    }
    if !(sigma_frac > 0.0) {
        return Err(Error::invalid(
            "sigma_frac",
            format!("must be positive, got {sigma_frac}"),
        ));
    }
    if theta <= critical_theta(sigma_frac, dist) {
        return Ok(0.0);
    }
    let s = dist
        .tangency_offset(theta / sigma_frac)
        .expect("b above critical coupling");
    Ok(sigma_frac * s + theta * dist.std_cdf(-s))
}

/// Effective `(a', b')` when a fraction `q` of a defaulted loan is recovered
/// as collateral. A lender keeps `q zJ` of its interbank book regardless of
/// its borrowers, so
///
/// `a' = (mu_L - mu_g - q zJ) / sigma`, `b' = (1 - q) zJ / sigma`.
///
/// `q = 0` is the uncollateralized model and `q = 1` removes the coupling
/// entirely (`a' = a - b`, `b' = 0`).
pub fn collateral_transform(
    mu_l: f64,
    mu_g: f64,
    zj: f64,
    sigma: f64,
    q: f64,
    dist: LocationScaleDistribution,
) -> Result<MeanFieldParams> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("q", format!("must lie in [0, 1], got {q}")));
    }
    if !(zj >= 0.0) {
        return Err(Error::invalid("zJ", format!("must be nonnegative, got {zj}")));
    }
    MeanFieldParams::new((mu_l - mu_g - q * zj) / sigma, (1.0 - q) * zj / sigma, dist)
}
