//! Standardized location-scale distributions.
//!
//! Both families are symmetric and unimodal around zero. The Student-t
//! variate is the raw (unscaled) t, so `mu + sigma * z` treats `sigma` as a
//! scale parameter rather than a standard deviation.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use libm::erfc;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg};
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::open_unit;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Lower and upper clamps applied to the uniform variate before inversion.
const SAMPLER_P_MIN: f64 = 1e-300;
const SAMPLER_P_MAX: f64 = 1.0 - 1e-16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LocationScaleDistribution {
    #[default]
    Normal,
    StudentT {
        dof: f64,
    },
}

impl LocationScaleDistribution {
    pub fn student_t(dof: f64) -> Result<Self> {
        if !(dof > 0.0) || !dof.is_finite() {
            return Err(Error::invalid("dof", format!("must be positive and finite, got {dof}")));
        }
        Ok(LocationScaleDistribution::StudentT { dof })
    }

    /// Standard CDF. Exact 0/1 limits at the infinities.
    pub fn std_cdf(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 1.0;
        }
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        match *self {
            LocationScaleDistribution::Normal => 0.5 * erfc(-x / SQRT_2),
            LocationScaleDistribution::StudentT { dof } => {
                // Two-sided tail mass from the regularized incomplete beta.
                let tail = beta_reg(0.5 * dof, 0.5, dof / (dof + x * x));
                if x < 0.0 {
                    0.5 * tail
                } else {
                    1.0 - 0.5 * tail
                }
            }
        }
    }

    /// Upper tail `1 - std_cdf(x)`, evaluated without cancellation.
    pub fn std_sf(&self, x: f64) -> f64 {
        self.std_cdf(-x)
    }

    pub fn std_pdf(&self, x: f64) -> f64 {
        match *self {
            LocationScaleDistribution::Normal => INV_SQRT_2PI * (-0.5 * x * x).exp(),
            LocationScaleDistribution::StudentT { dof } => {
                let log_norm = ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln();
                (log_norm - 0.5 * (dof + 1.0) * (x * x / dof).ln_1p()).exp()
            }
        }
    }

    /// Inverse of [`std_cdf`](Self::std_cdf) on `[0, 1]`.
    pub fn std_quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        match *self {
            LocationScaleDistribution::Normal => {
                let z = -SQRT_2 * erfc_inv(2.0 * p);
                self.newton_polish(z, p)
            }
            LocationScaleDistribution::StudentT { dof } => {
                let z = if dof == 1.0 {
                    (PI * (p - 0.5)).tan()
                } else if dof == 2.0 {
                    (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt()
                } else {
                    let tail = 2.0 * p.min(1.0 - p);
                    let x = inv_beta_reg(0.5 * dof, 0.5, tail);
                    let t = (dof * (1.0 - x) / x).sqrt();
                    if p < 0.5 {
                        -t
                    } else {
                        t
                    }
                };
                self.newton_polish(z, p)
            }
        }
    }

    fn newton_polish(&self, mut z: f64, p: f64) -> f64 {
        if !z.is_finite() {
            return z;
        }
        for _ in 0..2 {
            let density = self.std_pdf(z);
            if density <= f64::MIN_POSITIVE {
                break;
            }
            // Work in whichever tail keeps the residual well conditioned.
            let step = if p < 0.5 {
                (self.std_cdf(z) - p) / density
            } else {
                ((1.0 - p) - self.std_sf(z)) / density
            };
            if !step.is_finite() {
                break;
            }
            z -= step;
        }
        z
    }

    /// Density at the mode.
    pub fn peak_density(&self) -> f64 {
        self.std_pdf(0.0)
    }

    /// Coupling above which `p = 1 - CDF(a - b p)` can have three roots.
    pub fn critical_coupling(&self) -> f64 {
        1.0 / self.peak_density()
    }

    /// Positive offset `s` solving `b * pdf(s) = 1`, or `None` when
    /// `b <= b_c` (the map never gets steeper than the diagonal). At
    /// `b == b_c` the offset is zero.
    pub fn tangency_offset(&self, b: f64) -> Option<f64> {
        let ratio = b * self.peak_density();
        if !(ratio >= 1.0) {
            return None;
        }
        let s = match *self {
            LocationScaleDistribution::Normal => (2.0 * ratio.ln()).sqrt(),
            // pdf(s) = peak * (1 + s^2/nu)^(-(nu+1)/2)
            LocationScaleDistribution::StudentT { dof } => {
                (dof * (ratio.powf(2.0 / (dof + 1.0)) - 1.0)).max(0.0).sqrt()
            }
        };
        Some(s)
    }

    /// One standard variate by inverse-CDF of a single 64-bit uniform.
    pub fn sample_standard<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = open_unit(rng).clamp(SAMPLER_P_MIN, SAMPLER_P_MAX);
        match *self {
            // erfc_inv alone is accurate to a few ulp; the Newton polish in
            // std_quantile is skipped on the hot path.
            LocationScaleDistribution::Normal => -SQRT_2 * erfc_inv(2.0 * u),
            LocationScaleDistribution::StudentT { dof: 2.0 } => (2.0 * u - 1.0) / (2.0 * u * (1.0 - u)).sqrt(),
            LocationScaleDistribution::StudentT { dof: 1.0 } => (PI * (u - 0.5)).tan(),
            LocationScaleDistribution::StudentT { .. } => self.std_quantile(u),
        }
    }

    /// `mu + sigma * z` with `z` a standard variate of the family.
    pub fn sample<R: RngCore + ?Sized>(&self, mu: f64, sigma: f64, rng: &mut R) -> Result<f64> {
        if !(sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(mu + sigma * self.sample_standard(rng))
    }
}

impl fmt::Display for LocationScaleDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocationScaleDistribution::Normal => f.write_str("normal"),
            LocationScaleDistribution::StudentT { dof } => write!(f, "t:{dof}"),
        }
    }
}

/// Parses `normal` or `t:NU`.
impl FromStr for LocationScaleDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("normal") {
            return Ok(LocationScaleDistribution::Normal);
        }
        if let Some(nu) = s.strip_prefix("t:").or_else(|| s.strip_prefix("T:")) {
            let dof: f64 = nu
                .parse()
                .map_err(|_| Error::invalid("dist", format!("bad degrees of freedom `{nu}`")))?;
            return LocationScaleDistribution::student_t(dof);
        }
        Err(Error::invalid(
            "dist",
            format!("expected `normal` or `t:NU`, got `{s}`"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;

    const N: LocationScaleDistribution = LocationScaleDistribution::Normal;
    const T2: LocationScaleDistribution = LocationScaleDistribution::StudentT { dof: 2.0 };

    /// Composite Simpson integral of the density, used as an independent
    /// CDF oracle.
    fn simpson_cdf(d: &LocationScaleDistribution, x: f64) -> f64 {
        // cdf(x) = 0.5 + int_0^x pdf
        let n = 20_000;
        let h = x / n as f64;
        let mut acc = d.std_pdf(0.0) + d.std_pdf(x);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * d.std_pdf(k as f64 * h);
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn cdf_anchor_values() {
        assert_eq!(N.std_cdf(0.0), 0.5);
        assert_abs_diff_eq!(T2.std_cdf(0.0), 0.5, epsilon = 1e-15);
        // 1 - Phi(2.5) = 0.0062096653257761...
        assert_abs_diff_eq!(1.0 - N.std_cdf(2.5), 0.006_209_665_325_776_132, epsilon = 1e-12);
        assert_abs_diff_eq!(N.std_cdf(2.5), 0.9938, epsilon = 1e-4);
        // t(2) closed form 1/2 + x / (2 sqrt(2 + x^2))
        let closed = 0.5 + 1.0 / (2.0 * 3f64.sqrt());
        assert_abs_diff_eq!(T2.std_cdf(1.0), closed, epsilon = 1e-12);
        assert_abs_diff_eq!(T2.std_cdf(1.0), 0.78868, epsilon = 1e-5);
        assert_abs_diff_eq!(simpson_cdf(&T2, 1.0), closed, epsilon = 1e-10);
    }

    #[test]
    fn t2_cdf_matches_closed_form_across_range() {
        for k in -80..=80 {
            let x = k as f64 * 0.25;
            let closed = 0.5 + x / (2.0 * (2.0 + x * x).sqrt());
            assert_abs_diff_eq!(T2.std_cdf(x), closed, epsilon = 1e-10);
        }
    }

    #[test]
    fn normal_cdf_matches_quadrature() {
        for &x in &[-6.0, -3.3, -1.0, -0.2, 0.7, 1.96, 4.5] {
            assert_abs_diff_eq!(N.std_cdf(x), simpson_cdf(&N, x), epsilon = 1e-12);
        }
    }

    #[test]
    fn infinite_limits() {
        for d in [N, T2] {
            assert_eq!(d.std_cdf(f64::INFINITY), 1.0);
            assert_eq!(d.std_cdf(f64::NEG_INFINITY), 0.0);
        }
    }

    #[test]
    fn pdf_anchor_values() {
        assert_abs_diff_eq!(N.std_pdf(0.0), 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(T2.std_pdf(0.0), 1.0 / (2.0 * SQRT_2), epsilon = 1e-14);
        assert!(N.std_pdf(10.0) < 1e-21);
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        let h = 1e-5;
        for d in [N, T2, LocationScaleDistribution::StudentT { dof: 5.5 }] {
            for k in -40..=40 {
                let x = k as f64 * 0.2;
                let fd = (d.std_cdf(x + h) - d.std_cdf(x - h)) / (2.0 * h);
                assert_abs_diff_eq!(fd, d.std_pdf(x), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn peak_and_critical_coupling() {
        assert_abs_diff_eq!(N.critical_coupling(), (2.0 * PI).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(N.critical_coupling(), 2.5066, epsilon = 1e-4);
        assert_abs_diff_eq!(T2.peak_density(), 1.0 / (2.0 * SQRT_2), epsilon = 1e-14);
        assert_abs_diff_eq!(T2.critical_coupling(), 2.0 * SQRT_2, epsilon = 1e-9);
    }

    #[test]
    fn tangency_offset_solves_slope_condition() {
        assert_eq!(N.tangency_offset(2.0), None);
        for d in [N, T2, LocationScaleDistribution::StudentT { dof: 7.0 }] {
            for &b in &[3.0, 7.0, 15.0] {
                let s = d.tangency_offset(b).unwrap();
                assert_abs_diff_eq!(b * d.std_pdf(s), 1.0, epsilon = 1e-12);
            }
            let s = d.tangency_offset(d.critical_coupling()).unwrap();
            assert!(s.abs() < 1e-6);
        }
    }

    #[test]
    fn quantile_round_trip() {
        for d in [N, T2, LocationScaleDistribution::StudentT { dof: 3.5 }] {
            // Beyond |x| = 5 the upper branch loses digits to the spacing of p near 1.
            for k in -20..=20 {
                let x = k as f64 * 0.25;
                assert_abs_diff_eq!(d.std_quantile(d.std_cdf(x)), x, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn sampling_rejects_nonpositive_sigma() {
        let mut r = substream(3, &[]);
        assert!(N.sample(1.0, 0.0, &mut r).is_err());
        assert!(N.sample(1.0, -1.0, &mut r).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut a = substream(11, &[4]);
        let mut b = substream(11, &[4]);
        for _ in 0..100 {
            let x = T2.sample(0.0, 1.0, &mut a).unwrap();
            let y = T2.sample(0.0, 1.0, &mut b).unwrap();
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn normal_sample_mean() {
        let mut r = substream(2024, &[1]);
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| N.sample(1000.0, 30.0, &mut r).unwrap()).sum();
        // standard error 0.03
        assert_abs_diff_eq!(sum / n as f64, 1000.0, epsilon = 0.1);
    }

    #[test]
    fn student_t_sample_median() {
        let mut r = substream(2024, &[2]);
        let mut xs: Vec<f64> = (0..1_000_000)
            .map(|_| T2.sample(700.0, 50.0, &mut r).unwrap())
            .collect();
        xs.sort_by(f64::total_cmp);
        let median = 0.5 * (xs[499_999] + xs[500_000]);
        assert_abs_diff_eq!(median, 700.0, epsilon = 0.5);
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("normal".parse::<LocationScaleDistribution>().unwrap(), N);
        assert_eq!("t:2".parse::<LocationScaleDistribution>().unwrap(), T2);
        assert!("t:-1".parse::<LocationScaleDistribution>().is_err());
        assert!("cauchy".parse::<LocationScaleDistribution>().is_err());
        assert_eq!(T2.to_string(), "t:2");
    }
}
