//! Split R-hat and effective sample size.

use super::PosteriorDraws;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CoordDiagnostics {
    pub coord: String,
    pub rhat: f64,
    pub ess: f64,
    /// Zero variance within every half-chain; R-hat is reported as 1.
    pub degenerate: bool,
}

/// Each chain split into two halves (the middle draw of an odd-length chain
/// is dropped).
fn split_halves(draws: &PosteriorDraws, idx: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * draws.n_chains());
    for c in 0..draws.n_chains() {
        let x = draws.chain_column(c, idx);
        let h = x.len() / 2;
        out.push(x[..h].to_vec());
        out.push(x[x.len() - h..].to_vec());
    }
    out
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// (R-hat, W, var⁺, degenerate) for a set of equal-length sequences.
fn rhat_parts(seqs: &[Vec<f64>]) -> (f64, f64, f64, bool) {
    let m = seqs.len() as f64;
    let n = seqs[0].len() as f64;
    let stats: Vec<(f64, f64)> = seqs.iter().map(|s| mean_var(s)).collect();
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    if !(w > 0.0) {
        let spread = stats.iter().any(|s| s.0 != stats[0].0);
        return (if spread { f64::INFINITY } else { 1.0 }, w, var_plus, !spread);
    }
    ((var_plus / w).sqrt(), w, var_plus, false)
}

/// Multi-sequence ESS with Geyer's initial monotone sequence.
fn ess(seqs: &[Vec<f64>], w: f64, var_plus: f64) -> f64 {
    let m = seqs.len();
    let n = seqs[0].len();
    let total = (m * n) as f64;
    if !(var_plus > 0.0) {
        return total;
    }
    let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / n as f64).collect();
    let acov = |lag: usize| -> f64 {
        seqs.iter()
            .zip(&means)
            .map(|(s, &mu)| {
                let mut acc = 0.0;
                for t in 0..n - lag {
                    acc += (s[t] - mu) * (s[t + lag] - mu);
                }
                acc / n as f64
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |lag: usize| 1.0 - (w - acov(lag)) / var_plus;
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10().max(1.0));
    (total / tau).min(total)
}

/// Split R-hat and ESS for every coordinate.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<Vec<CoordDiagnostics>> {
    let per_chain = draws.chains.first().map_or(0, |c| c.n_draws(draws.n_coords()));
    if per_chain < 4 {
        return Err(Error::contract("diagnostics need at least 4 draws per chain"));
    }
    Ok((0..draws.n_coords())
        .map(|idx| {
            let seqs = split_halves(draws, idx);
            let (rhat, w, var_plus, degenerate) = rhat_parts(&seqs);
            let ess = if degenerate { (seqs.len() * seqs[0].len()) as f64 } else { ess(&seqs, w, var_plus) };
            CoordDiagnostics {
                coord: draws.coord_names[idx].clone(),
                rhat,
                ess,
                degenerate,
            }
        })
        .collect())
}

/// Largest split R-hat over non-degenerate coordinates; 1 if all are degenerate.
pub fn max_split_rhat(draws: &PosteriorDraws) -> f64 {
    let per_chain = draws.chains.first().map_or(0, |c| c.n_draws(draws.n_coords()));
    if per_chain < 4 {
        return f64::NAN;
    }
    (0..draws.n_coords())
        .map(|idx| rhat_parts(&split_halves(draws, idx)))
        .filter(|p| !p.3)
        .map(|p| p.0)
        .fold(1.0, f64::max)
}
