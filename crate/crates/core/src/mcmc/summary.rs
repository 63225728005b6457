use super::PosteriorDraws;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub median: f64,
    /// Central 95% interval (2.5% and 97.5% quantiles).
    pub lower: f64,
    pub upper: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Type-7 (linear interpolation) sample quantile of already sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, central 95% interval, mean and SD of one coordinate, pooled over chains.
pub fn posterior_summary(draws: &PosteriorDraws, coord: &str) -> Result<PosteriorSummary> {
    let idx = draws.coord_index(coord)?;
    let mut x = draws.column(idx);
    if x.is_empty() {
        return Err(Error::contract("no posterior draws"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    x.sort_by(f64::total_cmp);
    Ok(PosteriorSummary {
        median: quantile_type7(&x, 0.5),
        lower: quantile_type7(&x, 0.025),
        upper: quantile_type7(&x, 0.975),
        mean,
        sd: var.sqrt(),
    })
}
