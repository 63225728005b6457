//! Logit, normal CDF/quantile and the log-densities used by the models.

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// ln(p / (1 - p)).
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("logit", format!("p = {p} is outside (0, 1)")));
    }
    Ok((p / (1.0 - p)).ln())
}

/// 1 / (1 + e^-x), evaluated without overflow for large |x|.
pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF via `erfc`, accurate to a few ulp across the range.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Φ(x; mean, sd).
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::domain("normal_cdf", format!("sd = {sd} must be positive")));
    }
    Ok(std_normal_cdf((x - mean) / sd))
}

/// Φ⁻¹(p; mean, sd).
pub fn normal_quantile(p: f64, mean: f64, sd: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(
            "normal_quantile",
            format!("p = {p} is outside (0, 1)"),
        ));
    }
    if !(sd > 0.0) {
        return Err(Error::domain(
            "normal_quantile",
            format!("sd = {sd} must be positive"),
        ));
    }
    Ok(mean + sd * std_normal_quantile(p))
}

/// Standard normal quantile: Wichura's AS241 (PPND16) followed by one
/// Newton step against [`std_normal_cdf`]. Requires 0 < p < 1.
pub fn std_normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    let x = if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        q * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
            + 67265.770_927_008_7)
            * r
            + 45921.953_931_549_87)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r
                + 39307.895_800_092_71)
                * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0)
    } else {
        let r = if q < 0.0 { p } else { 1.0 - p };
        let r = (-r.ln()).sqrt();
        let val = if r <= 5.0 {
            let r = r - 1.6;
            (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
                + 0.241_780_725_177_450_6)
                * r
                + 1.270_458_252_452_368_4)
                * r
                + 3.647_848_324_763_204_5)
                * r
                + 5.769_497_221_460_691)
                * r
                + 4.630_337_846_156_546)
                * r
                + 1.423_437_110_749_683_5)
                / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4)
                    * r
                    + 0.015_198_666_563_616_457)
                    * r
                    + 0.148_103_976_427_480_08)
                    * r
                    + 0.689_767_334_985_100_5)
                    * r
                    + 1.676_384_830_183_803_8)
                    * r
                    + 2.053_191_626_637_759)
                    * r
                    + 1.0)
        } else {
            let r = r - 5.0;
            (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
                + 1.242_660_947_388_078_4e-3)
                * r
                + 0.026_532_189_526_576_124)
                * r
                + 0.296_560_571_828_504_9)
                * r
                + 1.784_826_539_917_291_3)
                * r
                + 5.463_784_911_164_114)
                * r
                + 6.657_904_643_501_103)
                / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7)
                    * r
                    + 1.846_318_317_510_054_8e-5)
                    * r
                    + 7.868_691_311_456_133e-4)
                    * r
                    + 0.014_875_361_290_850_615)
                    * r
                    + 0.136_929_880_922_735_8)
                    * r
                    + 0.599_832_206_555_888)
                    * r
                    + 1.0)
        };
        if q < 0.0 {
            -val
        } else {
            val
        }
    };
    let pdf = std_normal_pdf(x);
    if pdf > 0.0 && x.abs() < 37.0 {
        x - (std_normal_cdf(x) - p) / pdf
    } else {
        x
    }
}

/// Log-density of N(mean, sd²) at x.
#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Log-density of a bivariate normal with the given means, SDs and correlation.
pub fn bvn_ln_pdf(x: [f64; 2], mean: [f64; 2], sd: [f64; 2], corr: f64) -> f64 {
    let d1 = (x[0] - mean[0]) / sd[0];
    let d2 = (x[1] - mean[1]) / sd[1];
    let one_m = 1.0 - corr * corr;
    let q = (d1 * d1 - 2.0 * corr * d1 * d2 + d2 * d2) / one_m;
    -LN_2PI - sd[0].ln() - sd[1].ln() - 0.5 * one_m.ln() - 0.5 * q
}

/// ln C(n, k).
pub fn ln_choose(n: u32, k: u32) -> f64 {
    debug_assert!(k <= n);
    let (n, k) = (f64::from(n), f64::from(k));
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

/// Binomial log-pmf with success probability inv_logit(eta).
pub fn binomial_ln_pmf_logit(y: u32, n: u32, eta: f64) -> f64 {
    ln_choose(n, y) + f64::from(y) * eta - f64::from(n) * softplus(eta)
}

/// Numerically stable ln Σ exp(xᵢ); returns -∞ for an all -∞ input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Log-density of `v` when `v²` follows a half-normal with variance `var`
/// (the variance-scale folding), including the 2v change-of-variables factor.
pub fn ln_pdf_sd_from_halfnormal_variance(v: f64, var: f64) -> f64 {
    if v <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let u = v * v;
    // half-normal density of u: 2 / sqrt(2π var) · exp(-u² / 2var)
    std::f64::consts::LN_2 - 0.5 * (LN_2PI + var.ln()) - u * u / (2.0 * var)
        + (2.0 * v).ln()
}
