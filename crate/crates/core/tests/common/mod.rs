#![allow(dead_code)]

use bibasket::datagen::{ArmData, SubtrialData, TrialData};
use bibasket::mcmc::{diagnostics, PosteriorDraws};
use bibasket::models::{Component, ModelSpec, ParamState};
use bibasket::stats::RngStream;

/// Arbitrary valid state whose indicators have positive prior weight.
pub fn random_state(spec: &ModelSpec, rng: &mut RngStream) -> ParamState {
    let k = spec.n_subtrials();
    let mut v = |scale: f64| scale * rng.std_normal();
    let alpha_t = (0..k).map(|_| v(1.5)).collect();
    let alpha_e = (0..k).map(|_| v(2.0)).collect();
    let theta_t = (0..k).map(|_| v(1.5)).collect();
    let theta_e = (0..k).map(|_| v(1.5)).collect();
    let sigma = (0..k).map(|_| [0.3 + v(1.0).abs(), 0.3 + v(1.0).abs()]).collect();
    let beta = [v(1.0), v(1.0)];
    let phi = [0.1 + v(0.5).abs(), 0.1 + v(0.5).abs()];
    let rho = rng.uniform() * 1.98 - 0.99;
    let kappa = rng.uniform() * 1.98 - 0.99;
    let z = (0..k)
        .map(|i| Component::from_index(rng.categorical(&spec.weights[i])))
        .collect();
    ParamState { alpha_t, alpha_e, theta_t, theta_e, sigma, beta, phi, rho, kappa, z }
}

pub fn single_subtrial(control: ArmData, treatment: ArmData) -> TrialData {
    TrialData { subtrials: vec![SubtrialData { arms: [control, treatment] }] }
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Effective sample size of a named coordinate.
pub fn ess(draws: &PosteriorDraws, coord: &str) -> f64 {
    let diag = diagnostics(draws).unwrap();
    diag.into_iter().find(|d| d.coord == coord).unwrap().ess
}

/// Batch-means standard error of the mean of an autocorrelated series.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let b = x.len() / batches;
    let means: Vec<f64> = x.chunks_exact(b).map(|c| c.iter().sum::<f64>() / b as f64).collect();
    mean_sd(&means).1 / (means.len() as f64).sqrt()
}

pub fn sorted(mut x: Vec<f64>) -> Vec<f64> {
    x.sort_by(f64::total_cmp);
    x
}

/// One-chain draws holding the given (θᵗ, θᵉ) pairs; `pairs[draw][subtrial]`.
pub fn draws_from_pairs(pairs: &[Vec<(f64, f64)>]) -> PosteriorDraws {
    use bibasket::mcmc::ChainDraws;
    let k = pairs[0].len();
    let nc = ParamState::n_coords(k);
    let mut values = Vec::with_capacity(pairs.len() * nc);
    for row in pairs {
        let mut v = vec![1.0; nc];
        for (i, &(t, e)) in row.iter().enumerate() {
            v[2 * k + i] = t;
            v[3 * k + i] = e;
        }
        values.extend(v);
    }
    PosteriorDraws {
        coord_names: ParamState::coord_names(k),
        block_names: vec![],
        n_subtrials: k,
        burn_in: 0,
        thin: 1,
        chains: vec![ChainDraws {
            chain: 0,
            values,
            indicators: vec![0; pairs.len() * k],
            acceptance: vec![],
            scale_history: vec![],
        }],
    }
}

fn ln_binom_kernel(y: f64, n: f64, eta: f64) -> f64 {
    // y·η − n·ln(1 + e^η)
    y * eta - n * (eta.max(0.0) + (-eta.abs()).exp().ln_1p())
}

/// Posterior mean and median of θ on a 400×400 midpoint grid over (α, θ).
pub fn tox_grid_oracle(y_c: f64, y_e: f64, n: f64) -> (f64, f64) {
    let m = 400;
    let (a_lo, a_hi, t_lo, t_hi) = (-12.0, 10.0, -20.0, 15.0);
    let (da, dt) = ((a_hi - a_lo) / m as f64, (t_hi - t_lo) / m as f64);
    let mut logw = vec![0.0; m * m];
    for i in 0..m {
        let a = a_lo + (i as f64 + 0.5) * da;
        for j in 0..m {
            let t = t_lo + (j as f64 + 0.5) * dt;
            logw[i * m + j] = -0.5 * (a / 10.0).powi(2) - 0.5 * (t / 5.0).powi(2)
                + ln_binom_kernel(y_c, n, a)
                + ln_binom_kernel(y_e, n, a + t);
        }
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut marg = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            marg[j] += (logw[i * m + j] - top).exp();
        }
    }
    let total: f64 = marg.iter().sum();
    let mean = marg.iter().enumerate().map(|(j, w)| (t_lo + (j as f64 + 0.5) * dt) * w).sum::<f64>() / total;
    let mut acc = 0.0;
    let mut median = f64::NAN;
    for (j, w) in marg.iter().enumerate() {
        let p = w / total;
        if acc + p >= 0.5 {
            median = t_lo + j as f64 * dt + dt * (0.5 - acc) / p;
            break;
        }
        acc += p;
    }
    (mean, median)
}

/// Posterior mean and SD of the efficacy effect for one subtrial with known
/// residual SD: z_C ~ N(α, σ²), z_E ~ N(α + θ, σ²), α ~ N(0, a²), θ ~ N(0, t²).
pub fn conjugate_effect_posterior(zc: &[f64], ze: &[f64], sigma: f64, alpha_sd: f64, theta_sd: f64) -> (f64, f64) {
    // Precision P = prior + XᵀX/σ², b = Xᵀz/σ².
    let s2 = sigma * sigma;
    let (nc, ne) = (zc.len() as f64, ze.len() as f64);
    let (sc, se) = (zc.iter().sum::<f64>(), ze.iter().sum::<f64>());
    let p = [
        [1.0 / (alpha_sd * alpha_sd) + (nc + ne) / s2, ne / s2],
        [ne / s2, 1.0 / (theta_sd * theta_sd) + ne / s2],
    ];
    let b = [(sc + se) / s2, se / s2];
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    ((p[0][0] * b[1] - p[1][0] * b[0]) / det, (p[0][0] / det).sqrt())
}
