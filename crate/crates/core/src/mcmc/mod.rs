//! Adaptive Metropolis-within-Gibbs sampling for every model kind.

mod diagnostics;
mod sampler;
mod summary;

pub use diagnostics::{diagnostics, max_split_rhat, CoordDiagnostics};
pub use sampler::{run_chain, run_chain_with, IndicatorUpdate, JointIndicatorGibbs};
pub use summary::{posterior_summary, quantile_type7, PosteriorSummary};

use crate::datagen::TrialData;
use crate::error::{Error, Result};
use crate::models::{Component, ModelSpec, ParamState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub burn_in: usize,
    /// Retained-phase sweeps per chain (before thinning).
    pub iterations: usize,
    pub thin: usize,
    /// Sweeps between proposal-scale adaptations during burn-in.
    pub adapt_window: usize,
    /// Acceptance target for scalar random-walk updates.
    pub target_accept_scalar: f64,
    /// Acceptance target for bivariate block updates.
    pub target_accept_block: f64,
    pub seed: u64,
    /// Hold every efficacy residual SD at this value instead of sampling it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_sigma: Option<f64>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            burn_in: 2000,
            iterations: 10_000,
            thin: 1,
            adapt_window: 50,
            target_accept_scalar: 0.44,
            target_accept_block: 0.23,
            seed: 1,
            fix_sigma: None,
        }
    }
}

impl McmcConfig {
    /// 2 chains × 4000 retained sweeps after 1000 burn-in sweeps.
    pub fn fast() -> Self {
        McmcConfig {
            chains: 2,
            burn_in: 1000,
            iterations: 4000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(Error::contract("mcmc.chains must be at least 1"));
        }
        if self.iterations < 100 {
            return Err(Error::contract(format!(
                "mcmc.iterations = {} is below the minimum of 100",
                self.iterations
            )));
        }
        if self.thin < 1 || self.adapt_window < 1 {
            return Err(Error::contract("mcmc.thin and mcmc.adapt_window must be at least 1"));
        }
        for (name, t) in [
            ("target_accept_scalar", self.target_accept_scalar),
            ("target_accept_block", self.target_accept_block),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::contract(format!("mcmc.{name} = {t} outside (0, 1)")));
            }
        }
        if let Some(s) = self.fix_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::contract(format!("mcmc.fix_sigma = {s} must be positive")));
            }
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn retained_per_chain(&self) -> usize {
        self.iterations / self.thin
    }
}

/// One proposal-scale change made during burn-in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleRecord {
    /// Sweep number (1-based, counting burn-in) at which the change was made.
    pub iteration: usize,
    /// Index into [`PosteriorDraws::block_names`].
    pub block: usize,
    pub log_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    /// Row-major: one row of [`PosteriorDraws::coord_names`] values per retained draw.
    pub values: Vec<f64>,
    /// Row-major: one [`Component`] index per subtrial per retained draw.
    pub indicators: Vec<u8>,
    /// Post-burn-in acceptance rate per block; NaN for blocks never proposed.
    pub acceptance: Vec<f64>,
    pub scale_history: Vec<ScaleRecord>,
}

impl ChainDraws {
    pub fn n_draws(&self, n_coords: usize) -> usize {
        self.values.len() / n_coords
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub coord_names: Vec<String>,
    pub block_names: Vec<String>,
    pub n_subtrials: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn n_coords(&self) -> usize {
        self.coord_names.len()
    }

    pub fn n_subtrials(&self) -> usize {
        self.n_subtrials
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Retained draws across all chains.
    pub fn n_draws(&self) -> usize {
        let c = self.n_coords();
        self.chains.iter().map(|ch| ch.n_draws(c)).sum()
    }

    pub fn coord_index(&self, name: &str) -> Result<usize> {
        self.coord_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::contract(format!("unknown coordinate '{name}'")))
    }

    /// Draws of coordinate `idx` in one chain.
    pub fn chain_column(&self, chain: usize, idx: usize) -> Vec<f64> {
        let c = self.n_coords();
        self.chains[chain].values.iter().skip(idx).step_by(c).copied().collect()
    }

    /// Draws of coordinate `idx` pooled over chains.
    pub fn column(&self, idx: usize) -> Vec<f64> {
        (0..self.n_chains())
            .flat_map(|ch| self.chain_column(ch, idx))
            .collect()
    }

    /// Pooled (θᵗ, θᵉ) draws of subtrial `k` (0-based).
    pub fn theta_pairs(&self, k: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = self.n_coords();
        let (it, ie) = (2 * self.n_subtrials + k, 3 * self.n_subtrials + k);
        self.chains
            .iter()
            .flat_map(move |ch| ch.values.chunks_exact(c).map(move |row| (row[it], row[ie])))
    }

    /// Full state of retained draw `draw` in chain `chain`.
    pub fn state(&self, chain: usize, draw: usize) -> Result<ParamState> {
        let (c, k) = (self.n_coords(), self.n_subtrials);
        let ch = &self.chains[chain];
        let z: Vec<Component> = ch.indicators[draw * k..(draw + 1) * k]
            .iter()
            .map(|&i| Component::from_index(i as usize))
            .collect();
        ParamState::from_flat(&ch.values[draw * c..(draw + 1) * c], &z)
    }

    /// Pooled indicator draws of subtrial `k`.
    pub fn indicator_column(&self, k: usize) -> Vec<Component> {
        let n = self.n_subtrials;
        self.chains
            .iter()
            .flat_map(|ch| ch.indicators.iter().skip(k).step_by(n))
            .map(|&c| Component::from_index(c as usize))
            .collect()
    }
}

/// Run `cfg.chains` independent chains and collect their draws.
///
/// Chains run in parallel on the current rayon pool; chain `i` uses the
/// stream derived from `(cfg.seed, i)`, so the output does not depend on
/// scheduling.
pub fn run_posterior(data: &TrialData, spec: &ModelSpec, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    run_posterior_with(data, spec, cfg, &JointIndicatorGibbs)
}

pub fn run_posterior_with(
    data: &TrialData,
    spec: &ModelSpec,
    cfg: &McmcConfig,
    indicators: &dyn IndicatorUpdate,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let chains: Vec<ChainDraws> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain_with(data, spec, cfg, c, indicators))
        .collect::<Result<_>>()?;
    Ok(PosteriorDraws {
        coord_names: ParamState::coord_names(spec.n_subtrials()),
        block_names: sampler::block_names(spec.n_subtrials()),
        n_subtrials: spec.n_subtrials(),
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        chains,
    })
}
