//! Special functions and random-variate generation shared by every module.

pub mod quadrature;
pub mod rng;
pub mod special;

pub use rng::RngStream;
pub use special::{inv_logit, logit, normal_cdf, normal_quantile};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Mean, marginal SDs and correlation of a bivariate normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BivariateNormalParams {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
    pub corr: f64,
}

impl BivariateNormalParams {
    pub fn new(mean: [f64; 2], sd: [f64; 2], corr: f64) -> Result<Self> {
        if !(sd[0] > 0.0 && sd[1] > 0.0) {
            return Err(Error::domain(
                "BivariateNormalParams",
                format!("sds must be positive, got {sd:?}"),
            ));
        }
        if !(-1.0..=1.0).contains(&corr) {
            return Err(Error::domain(
                "BivariateNormalParams",
                format!("correlation {corr} outside [-1, 1]"),
            ));
        }
        if !(mean[0].is_finite() && mean[1].is_finite()) {
            return Err(Error::domain(
                "BivariateNormalParams",
                "mean must be finite",
            ));
        }
        Ok(Self { mean, sd, corr })
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let off = self.corr * self.sd[0] * self.sd[1];
        [[self.sd[0] * self.sd[0], off], [off, self.sd[1] * self.sd[1]]]
    }
}

/// One draw from the bivariate normal.
pub fn sample_bivariate_normal(params: &BivariateNormalParams, rng: &mut RngStream) -> [f64; 2] {
    let u = rng.std_normal();
    let v = rng.std_normal();
    let r = params.corr;
    let w = r * u + (1.0 - r * r).max(0.0).sqrt() * v;
    [
        params.mean[0] + params.sd[0] * u,
        params.mean[1] + params.sd[1] * w,
    ]
}

/// |N(0, scale_var)|.
pub fn sample_half_normal(scale_var: f64, rng: &mut RngStream) -> Result<f64> {
    if !(scale_var > 0.0) {
        return Err(Error::domain(
            "sample_half_normal",
            format!("variance {scale_var} must be positive"),
        ));
    }
    Ok((scale_var.sqrt() * rng.std_normal()).abs())
}

/// Cor(y, z) for y = I(x ≤ T) when (x, z) is bivariate normal.
///
/// The inner integral over z reduces to the conditional mean
/// E[z | x] = μ₂ + ρσ₂(x − μ₁)/σ₁, leaving a one-dimensional integral
/// over x ≤ T that is evaluated by adaptive quadrature.
pub fn outcome_correlation(params: &BivariateNormalParams, threshold: f64) -> Result<f64> {
    let [mu1, _] = params.mean;
    let [s1, s2] = params.sd;
    let t = (threshold - mu1) / s1;
    let p = special::std_normal_cdf(t);
    if !(p > 1e-14 && p < 1.0 - 1e-14) {
        return Err(Error::UndefinedCorrelation(p));
    }
    if params.corr == 0.0 {
        return Ok(0.0);
    }
    // Centred integrand: (E[z|u] − μ₂)·φ(u) over u ≤ t.
    let f = |u: f64| params.corr * s2 * u * special::std_normal_pdf(u);
    let lower = t.min(0.0) - 14.0;
    let cov = quadrature::adaptive_simpson(&f, lower, t, 1e-14);
    Ok((cov / (s2 * (p * (1.0 - p)).sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validate() {
        assert!(BivariateNormalParams::new([0.0, 0.0], [1.0, 0.0], 0.0).is_err());
        assert!(BivariateNormalParams::new([0.0, 0.0], [1.0, 1.0], 1.01).is_err());
        assert!(BivariateNormalParams::new([0.0, 0.0], [1.0, 1.0], -1.0).is_ok());
        let p = BivariateNormalParams::new([0.0, 0.0], [2.0, 3.0], 0.5).unwrap();
        let c = p.covariance();
        assert_eq!(c[0][1], c[1][0]);
        assert!(c[0][0] * c[1][1] - c[0][1] * c[1][0] >= 0.0);
    }

    #[test]
    fn perfect_correlation_gives_equal_standardised_coordinates() {
        let p = BivariateNormalParams::new([1.0, -2.0], [1.5, 1.5], 1.0).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..1000 {
            let [x, z] = sample_bivariate_normal(&p, &mut rng);
            assert!(((x - 1.0) / 1.5 - (z + 2.0) / 1.5).abs() < 1e-12);
        }
    }

    fn sample_corr(p: &BivariateNormalParams, n: usize, seed: u64) -> f64 {
        let mut rng = RngStream::new(seed, 0);
        let draws: Vec<[f64; 2]> = (0..n).map(|_| sample_bivariate_normal(p, &mut rng)).collect();
        let m0 = draws.iter().map(|d| d[0]).sum::<f64>() / n as f64;
        let m1 = draws.iter().map(|d| d[1]).sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for d in &draws {
            sxy += (d[0] - m0) * (d[1] - m1);
            sxx += (d[0] - m0).powi(2);
            syy += (d[1] - m1).powi(2);
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn sample_correlation_matches_request() {
        let p = BivariateNormalParams::new([1.2, 3.2], [1.0, 1.0], 0.8).unwrap();
        let r = sample_corr(&p, 100_000, 11);
        assert!((r - 0.8).abs() < 0.01, "{r}");
        let p0 = BivariateNormalParams::new([1.2, 3.2], [1.0, 1.0], 0.0).unwrap();
        let n = 100_000;
        let r0 = sample_corr(&p0, n, 12);
        assert!(r0.abs() < 3.0 / (n as f64).sqrt(), "{r0}");
    }

    #[test]
    fn half_normal_moments() {
        let mut rng = RngStream::new(5, 1);
        assert!(sample_half_normal(0.0, &mut rng).is_err());
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_half_normal(0.25, &mut rng).unwrap())
            .collect();
        assert!(draws.iter().all(|&d| d >= 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let expect = 0.5 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - expect).abs() < 0.01, "{mean} vs {expect}");
        let mean25 = (0..n)
            .map(|_| sample_half_normal(25.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean25 - 3.989).abs() < 0.05, "{mean25}");
    }

    /// Closed form of the reduced integral: Cov = −ρσ₂φ(t).
    fn closed_form(p: &BivariateNormalParams, threshold: f64) -> f64 {
        let t = (threshold - p.mean[0]) / p.sd[0];
        let pr = special::std_normal_cdf(t);
        -p.corr * special::std_normal_pdf(t) / (pr * (1.0 - pr)).sqrt()
    }

    /// Brute-force estimate from simulated (x, z) pairs with its standard error.
    fn monte_carlo(p: &BivariateNormalParams, threshold: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = RngStream::new(seed, 99);
        let (mut sy, mut sz, mut syz, mut syy, mut szz) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let [x, z] = sample_bivariate_normal(p, &mut rng);
            let y = if x <= threshold { 1.0 } else { 0.0 };
            sy += y;
            sz += z;
            syz += y * z;
            syy += y * y;
            szz += z * z;
        }
        let nf = n as f64;
        let cov = syz / nf - sy * sz / nf / nf;
        let vy = syy / nf - (sy / nf).powi(2);
        let vz = szz / nf - (sz / nf).powi(2);
        let r = cov / (vy * vz).sqrt();
        (r, (1.0 - r * r) / nf.sqrt())
    }

    #[test]
    fn correlation_zero_when_independent() {
        let p = BivariateNormalParams::new([1.2, 3.2], [1.0, 1.0], 0.0).unwrap();
        assert!(outcome_correlation(&p, 0.8).unwrap().abs() < 1e-9);
    }

    #[test]
    fn correlation_sign_symmetry() {
        let a = BivariateNormalParams::new([1.2, 3.2], [1.0, 1.0], 0.8).unwrap();
        let b = BivariateNormalParams::new([1.2, 3.2], [1.0, 1.0], -0.8).unwrap();
        let ra = outcome_correlation(&a, 1.2).unwrap();
        let rb = outcome_correlation(&b, 1.2).unwrap();
        assert!((ra + rb).abs() < 1e-12);
        assert!(ra < 0.0);
    }

    #[test]
    fn correlation_matches_closed_form_and_monte_carlo() {
        let grid = [
            ([1.2, 3.2], [1.0, 1.0], 0.8, 0.8),
            ([1.5, 3.5], [1.0, 1.0], 0.8, 0.8),
            ([0.0, 0.0], [2.0, 0.5], -0.4, 1.0),
            ([0.88, 2.88], [1.0, 1.0], 0.3, 0.8),
            ([2.0, -1.0], [0.7, 1.3], 0.95, 0.2),
        ];
        for (i, (m, s, r, t)) in grid.into_iter().enumerate() {
            let p = BivariateNormalParams::new(m, s, r).unwrap();
            let q = outcome_correlation(&p, t).unwrap();
            assert!((q - closed_form(&p, t)).abs() < 1e-10, "closed form at {i}");
            let n = if i == 0 { 1_000_000 } else { 200_000 };
            let (mc, se) = monte_carlo(&p, t, n, 40 + i as u64);
            assert!((q - mc).abs() < 3.0 * se, "grid {i}: quad {q} mc {mc} se {se}");
        }
    }

    #[test]
    fn correlation_undefined_at_extreme_threshold() {
        let p = BivariateNormalParams::new([0.0, 0.0], [1.0, 1.0], 0.5).unwrap();
        assert!(matches!(
            outcome_correlation(&p, -60.0),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(outcome_correlation(&p, 60.0).is_err());
    }
}
