//! Log-posterior kernels of the five analysis models.
//!
//! Every model is written as a four-component mixture over the treatment
//! effect pair (θᵗ, θᵉ) of each subtrial:
//!
//! | component | θᵗ            | θᵉ            | correlation |
//! |-----------|---------------|---------------|-------------|
//! | Both      | β₁, φ₁        | β₂, φ₂        | ρ           |
//! | ToxOnly   | β₁, φ₁        | m₂, s₂        | 0           |
//! | EffOnly   | m₁, s₁        | β₂, φ₂        | 0           |
//! | Neither   | m₁, s₁        | m₂, s₂        | κ           |
//!
//! BiEXNEX uses only Both/Neither, BHM only Both, SA only Neither.
//! IndEXNEX uses all four with factorised weights and ρ = κ = 0.

use crate::datagen::{Arm, TrialData};
use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::stats::BivariateNormalParams;
use crate::stats::special::{
    binomial_ln_pmf_logit, bvn_ln_pdf, ln_choose, ln_pdf_sd_from_halfnormal_variance,
    log_sum_exp, normal_ln_pdf, LN_2PI,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Hyperprior constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    /// SD of the normal prior on the control-arm parameters αᵗ, αᵉ.
    pub alpha_sd: f64,
    /// Variance of the half-normal prior placed on σ².
    pub sigma_halfnormal_var: f64,
    /// SD of the normal prior on β₁, β₂.
    pub beta_sd: f64,
    /// Variance of the half-normal prior placed on φ².
    pub phi_halfnormal_var: f64,
    /// NEX means (m₁ₖ, m₂ₖ), one pair per subtrial.
    pub nex_mean: Vec<[f64; 2]>,
    /// NEX SDs (s₁ₖ, s₂ₖ), one pair per subtrial.
    pub nex_sd: Vec<[f64; 2]>,
}

impl PriorSpec {
    /// The reference priors for `k` subtrials.
    pub fn defaults(k: usize) -> Self {
        PriorSpec {
            alpha_sd: 10.0,
            sigma_halfnormal_var: 25.0,
            beta_sd: 5.0,
            phi_halfnormal_var: 0.25,
            nex_mean: vec![[0.0, 0.0]; k],
            nex_sd: vec![[5.0, 5.0]; k],
        }
    }

    pub fn n_subtrials(&self) -> usize {
        self.nex_mean.len()
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        for (name, v) in [
            ("alpha_sd", self.alpha_sd),
            ("sigma_halfnormal_var", self.sigma_halfnormal_var),
            ("beta_sd", self.beta_sd),
            ("phi_halfnormal_var", self.phi_halfnormal_var),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("prior {name} must be positive, got {v}")));
            }
        }
        if self.nex_mean.len() != k || self.nex_sd.len() != k {
            return Err(Error::contract(format!(
                "prior NEX vectors have lengths {} and {}, expected {k}",
                self.nex_mean.len(),
                self.nex_sd.len()
            )));
        }
        if self.nex_mean.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::contract("prior nex_mean must be finite"));
        }
        if self.nex_sd.iter().flatten().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::contract("prior nex_sd entries must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "BHM")]
    Bhm,
    #[serde(rename = "BiEXNEX")]
    BiExnex,
    #[serde(rename = "E-BiEXNEX")]
    EBiExnex,
    #[serde(rename = "IndEXNEX")]
    IndExnex,
    #[serde(rename = "SA")]
    Sa,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Bhm,
        ModelKind::BiExnex,
        ModelKind::EBiExnex,
        ModelKind::IndExnex,
        ModelKind::Sa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bhm => "BHM",
            ModelKind::BiExnex => "BiEXNEX",
            ModelKind::EBiExnex => "E-BiEXNEX",
            ModelKind::IndExnex => "IndEXNEX",
            ModelKind::Sa => "SA",
        }
    }

    /// True for the kinds whose θ prior has two components (or is degenerate).
    pub fn is_two_component(self) -> bool {
        matches!(self, ModelKind::Bhm | ModelKind::BiExnex | ModelKind::Sa)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::contract(format!("unknown model kind '{s}'")))
    }
}

/// Mixture component a subtrial's effect pair is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Component {
    Both = 0,
    ToxOnly = 1,
    EffOnly = 2,
    Neither = 3,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Both,
        Component::ToxOnly,
        Component::EffOnly,
        Component::Neither,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Component {
        Component::ALL[i]
    }

    /// θᵗ drawn from the exchangeable distribution.
    pub fn tox_exchangeable(self) -> bool {
        matches!(self, Component::Both | Component::ToxOnly)
    }

    /// θᵉ drawn from the exchangeable distribution.
    pub fn eff_exchangeable(self) -> bool {
        matches!(self, Component::Both | Component::EffOnly)
    }

    /// Whether coordinate `d` (0 toxicity, 1 efficacy) is exchangeable.
    pub fn exchangeable(self, d: usize) -> bool {
        if d == 0 {
            self.tox_exchangeable()
        } else {
            self.eff_exchangeable()
        }
    }
}

/// A model kind with its prior weights and hyperprior constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Label used in reports; defaults to the kind's name.
    pub name: String,
    /// Per-subtrial component weights (λ₁ₖ, …, λ₄ₖ) in [`Component`] order.
    pub weights: Vec<[f64; 4]>,
    pub prior: PriorSpec,
    /// Value ρ is held at instead of being estimated.
    pub fixed_rho: Option<f64>,
    /// Value κ is held at instead of being estimated.
    pub fixed_kappa: Option<f64>,
}

impl ModelSpec {
    /// The reference configuration of `kind` for `k` subtrials:
    /// ω = 0.5 for BiEXNEX, λ = 0.25 for E-BiEXNEX, ωᵗ = ωᵉ = 0.5 for IndEXNEX.
    pub fn reference(kind: ModelKind, k: usize) -> Self {
        let prior = PriorSpec::defaults(k);
        match kind {
            ModelKind::Bhm => Self::bhm(prior),
            ModelKind::BiExnex => Self::biexnex(&vec![0.5; k], prior),
            ModelKind::EBiExnex => Self::ebiexnex(&vec![[0.25; 4]; k], prior),
            ModelKind::IndExnex => Self::indexnex(&vec![0.5; k], &vec![0.5; k], prior),
            ModelKind::Sa => Self::sa(prior),
        }
    }

    pub fn bhm(prior: PriorSpec) -> Self {
        let k = prior.n_subtrials();
        Self::raw(ModelKind::Bhm, vec![[1.0, 0.0, 0.0, 0.0]; k], prior, None, None)
    }

    /// Stand-alone analysis: every subtrial NEX with κ = 0.
    pub fn sa(prior: PriorSpec) -> Self {
        let k = prior.n_subtrials();
        Self::raw(ModelKind::Sa, vec![[0.0, 0.0, 0.0, 1.0]; k], prior, None, Some(0.0))
    }

    pub fn biexnex(omega: &[f64], prior: PriorSpec) -> Self {
        let w = omega.iter().map(|&o| [o, 0.0, 0.0, 1.0 - o]).collect();
        Self::raw(ModelKind::BiExnex, w, prior, None, None)
    }

    pub fn ebiexnex(lambda: &[[f64; 4]], prior: PriorSpec) -> Self {
        Self::raw(ModelKind::EBiExnex, lambda.to_vec(), prior, None, None)
    }

    /// Independent toxicity and efficacy EXNEX: factorised weights, ρ = κ = 0.
    pub fn indexnex(omega_t: &[f64], omega_e: &[f64], prior: PriorSpec) -> Self {
        let w = omega_t
            .iter()
            .zip(omega_e)
            .map(|(&t, &e)| factorised_weights(t, e))
            .collect();
        Self::raw(ModelKind::IndExnex, w, prior, Some(0.0), Some(0.0))
    }

    fn raw(
        kind: ModelKind,
        weights: Vec<[f64; 4]>,
        prior: PriorSpec,
        fixed_rho: Option<f64>,
        fixed_kappa: Option<f64>,
    ) -> Self {
        ModelSpec {
            kind,
            name: kind.name().to_string(),
            weights,
            prior,
            fixed_rho,
            fixed_kappa,
        }
    }

    pub fn n_subtrials(&self) -> usize {
        self.weights.len()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Check weight rows against the kind's structural constraints.
    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::contract("model has no subtrials"));
        }
        self.prior.validate(k)?;
        for (i, w) in self.weights.iter().enumerate() {
            if w.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::contract(format!(
                    "{}: weights for subtrial {} must lie in [0, 1], got {w:?}",
                    self.name,
                    i + 1
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::contract(format!(
                    "{}: weights for subtrial {} sum to {sum}, expected 1",
                    self.name,
                    i + 1
                )));
            }
            let ok = match self.kind {
                ModelKind::Bhm => w[0] == 1.0,
                ModelKind::Sa => w[3] == 1.0,
                ModelKind::BiExnex => w[1] == 0.0 && w[2] == 0.0,
                ModelKind::EBiExnex => true,
                ModelKind::IndExnex => (w[0] * w[3] - w[1] * w[2]).abs() <= WEIGHT_SUM_TOL,
            };
            if !ok {
                return Err(Error::contract(format!(
                    "{}: weights {w:?} for subtrial {} are not valid for {}",
                    self.name,
                    i + 1,
                    self.kind
                )));
            }
        }
        for (name, v) in [("fixed_rho", self.fixed_rho), ("fixed_kappa", self.fixed_kappa)] {
            if let Some(v) = v {
                if !(v > -1.0 && v < 1.0) {
                    return Err(Error::contract(format!("{name} = {v} outside (-1, 1)")));
                }
            }
        }
        Ok(())
    }

    /// Components with positive prior weight in subtrial `k`.
    pub fn support(&self, k: usize) -> impl Iterator<Item = Component> + '_ {
        Component::ALL
            .into_iter()
            .filter(move |c| self.weights[k][c.index()] > 0.0)
    }

    pub fn rho_of(&self, state: &ParamState) -> f64 {
        self.fixed_rho.unwrap_or(state.rho)
    }

    pub fn kappa_of(&self, state: &ParamState) -> f64 {
        self.fixed_kappa.unwrap_or(state.kappa)
    }
}

/// (ωᵗωᵉ, ωᵗ(1−ωᵉ), (1−ωᵗ)ωᵉ, (1−ωᵗ)(1−ωᵉ)).
pub fn factorised_weights(omega_t: f64, omega_e: f64) -> [f64; 4] {
    [
        omega_t * omega_e,
        omega_t * (1.0 - omega_e),
        (1.0 - omega_t) * omega_e,
        (1.0 - omega_t) * (1.0 - omega_e),
    ]
}

/// Every model parameter for one MCMC state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub alpha_t: Vec<f64>,
    pub alpha_e: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub theta_e: Vec<f64>,
    /// Efficacy residual SDs, indexed `[subtrial][arm]`.
    pub sigma: Vec<[f64; 2]>,
    pub beta: [f64; 2],
    pub phi: [f64; 2],
    pub rho: f64,
    pub kappa: f64,
    pub z: Vec<Component>,
}

impl ParamState {
    /// Number of scalar coordinates in [`ParamState::flatten`] for `k` subtrials.
    pub fn n_coords(k: usize) -> usize {
        6 * k + 6
    }

    /// Names of the flattened coordinates, subtrials numbered from 1.
    pub fn coord_names(k: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(Self::n_coords(k));
        for prefix in ["alpha_t", "alpha_e", "theta_t", "theta_e", "sigma_c", "sigma_e"] {
            out.extend((1..=k).map(|i| format!("{prefix}[{i}]")));
        }
        out.extend(
            ["beta1", "beta2", "phi1", "phi2", "rho", "kappa"]
                .iter()
                .map(|s| s.to_string()),
        );
        out
    }

    pub fn n_subtrials(&self) -> usize {
        self.theta_t.len()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.alpha_t);
        out.extend_from_slice(&self.alpha_e);
        out.extend_from_slice(&self.theta_t);
        out.extend_from_slice(&self.theta_e);
        out.extend(self.sigma.iter().map(|s| s[0]));
        out.extend(self.sigma.iter().map(|s| s[1]));
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.phi);
        out.push(self.rho);
        out.push(self.kappa);
    }

    /// Inverse of [`ParamState::flatten`]; `z` supplies the indicators.
    pub fn from_flat(values: &[f64], z: &[Component]) -> Result<Self> {
        let k = z.len();
        if values.len() != Self::n_coords(k) {
            return Err(Error::contract(format!(
                "expected {} coordinates for {k} subtrials, got {}",
                Self::n_coords(k),
                values.len()
            )));
        }
        let seg = |i: usize| values[i * k..(i + 1) * k].to_vec();
        let h = &values[6 * k..];
        Ok(ParamState {
            alpha_t: seg(0),
            alpha_e: seg(1),
            theta_t: seg(2),
            theta_e: seg(3),
            sigma: (0..k).map(|i| [values[4 * k + i], values[5 * k + i]]).collect(),
            beta: [h[0], h[1]],
            phi: [h[2], h[3]],
            rho: h[4],
            kappa: h[5],
            z: z.to_vec(),
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::n_coords(self.n_subtrials()));
        self.flatten_into(&mut out);
        out
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let k = spec.n_subtrials();
        let lens = [
            self.alpha_t.len(),
            self.alpha_e.len(),
            self.theta_t.len(),
            self.theta_e.len(),
            self.sigma.len(),
            self.z.len(),
        ];
        if lens.iter().any(|&l| l != k) {
            return Err(Error::contract(format!(
                "state vectors have lengths {lens:?}, expected {k}"
            )));
        }
        if self.sigma.iter().flatten().any(|&s| !(s > 0.0)) || !(self.phi[0] > 0.0 && self.phi[1] > 0.0) {
            return Err(Error::contract("state SDs must be positive"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0 && self.kappa > -1.0 && self.kappa < 1.0) {
            return Err(Error::contract("state correlations must lie in (-1, 1)"));
        }
        for (i, &c) in self.z.iter().enumerate() {
            if spec.weights[i][c.index()] <= 0.0 {
                return Err(Error::contract(format!(
                    "indicator {c:?} of subtrial {} has zero prior weight under {}",
                    i + 1,
                    spec.name
                )));
            }
        }
        Ok(())
    }
}

/// Treatment indicator: 0 for control, 1 for treatment.
#[inline]
pub fn arm_effect_multiplier(arm: Arm) -> f64 {
    match arm {
        Arm::Control => 0.0,
        Arm::Treatment => 1.0,
    }
}

/// Log-likelihood of the trial data, evaluated patient by patient.
pub fn log_likelihood(data: &TrialData, state: &ParamState) -> Result<f64> {
    if data.n_subtrials() != state.n_subtrials() {
        return Err(Error::contract(format!(
            "data has {} subtrials, state has {}",
            data.n_subtrials(),
            state.n_subtrials()
        )));
    }
    let mut total = 0.0;
    for (k, sub) in data.subtrials.iter().enumerate() {
        for arm in Arm::BOTH {
            let a = sub.arm(arm);
            let t = arm_effect_multiplier(arm);
            let eta = state.alpha_t[k] + t * state.theta_t[k];
            let tox = binomial_ln_pmf_logit(a.tox, a.n, eta);
            if !tox.is_finite() {
                return Err(Error::NonFinite {
                    what: "toxicity log-likelihood",
                    subtrial: k + 1,
                    arm: arm.label(),
                });
            }
            let mean = state.alpha_e[k] + t * state.theta_e[k];
            let sd = state.sigma[k][arm.index()];
            let eff: f64 = a.efficacy.iter().map(|&z| normal_ln_pdf(z, mean, sd)).sum();
            if !eff.is_finite() {
                return Err(Error::NonFinite {
                    what: "efficacy log-likelihood",
                    subtrial: k + 1,
                    arm: arm.label(),
                });
            }
            total += tox + eff;
        }
    }
    Ok(total)
}

/// Log-density of θₖ = (θᵗ, θᵉ) under component `c`.
pub fn component_ln_density(
    c: Component,
    theta: [f64; 2],
    state: &ParamState,
    spec: &ModelSpec,
    k: usize,
) -> f64 {
    let m = spec.prior.nex_mean[k];
    let s = spec.prior.nex_sd[k];
    let b = state.beta;
    let p = state.phi;
    match c {
        Component::Both => bvn_ln_pdf(theta, b, p, spec.rho_of(state)),
        Component::ToxOnly => normal_ln_pdf(theta[0], b[0], p[0]) + normal_ln_pdf(theta[1], m[1], s[1]),
        Component::EffOnly => normal_ln_pdf(theta[0], m[0], s[0]) + normal_ln_pdf(theta[1], b[1], p[1]),
        Component::Neither => bvn_ln_pdf(theta, m, s, spec.kappa_of(state)),
    }
}

/// Mean, SDs and correlation of θₖ under component `c`.
pub fn component_params(c: Component, state: &ParamState, spec: &ModelSpec, k: usize) -> BivariateNormalParams {
    let m = spec.prior.nex_mean[k];
    let s = spec.prior.nex_sd[k];
    let (b, p) = (state.beta, state.phi);
    let (mean, sd, corr) = match c {
        Component::Both => (b, p, spec.rho_of(state)),
        Component::ToxOnly => ([b[0], m[1]], [p[0], s[1]], 0.0),
        Component::EffOnly => ([m[0], b[1]], [s[0], p[1]], 0.0),
        Component::Neither => (m, s, spec.kappa_of(state)),
    };
    BivariateNormalParams { mean, sd, corr }
}

/// Log prior of every parameter that does not depend on the indicators.
///
/// ρ and κ always contribute their uniform density, including when pinned,
/// so that pinning only changes which value the component densities use.
pub fn hyperprior_ln_density(state: &ParamState, spec: &ModelSpec) -> f64 {
    let pr = &spec.prior;
    let mut lp = 0.0;
    for k in 0..state.n_subtrials() {
        lp += normal_ln_pdf(state.alpha_t[k], 0.0, pr.alpha_sd);
        lp += normal_ln_pdf(state.alpha_e[k], 0.0, pr.alpha_sd);
        for j in 0..2 {
            lp += ln_pdf_sd_from_halfnormal_variance(state.sigma[k][j], pr.sigma_halfnormal_var);
        }
    }
    for d in 0..2 {
        lp += normal_ln_pdf(state.beta[d], 0.0, pr.beta_sd);
        lp += ln_pdf_sd_from_halfnormal_variance(state.phi[d], pr.phi_halfnormal_var);
    }
    for r in [state.rho, state.kappa] {
        lp += if r > -1.0 && r < 1.0 {
            -std::f64::consts::LN_2
        } else {
            f64::NEG_INFINITY
        };
    }
    lp
}

fn log_prior_mixture(state: &ParamState, spec: &ModelSpec) -> Result<f64> {
    state.validate(spec)?;
    let mut lp = hyperprior_ln_density(state, spec);
    for k in 0..state.n_subtrials() {
        let c = state.z[k];
        lp += spec.weights[k][c.index()].ln();
        lp += component_ln_density(c, [state.theta_t[k], state.theta_e[k]], state, spec, k);
    }
    Ok(lp)
}

/// Log prior for BHM, BiEXNEX and SA, conditional on the indicators.
pub fn log_prior_biexnex(state: &ParamState, spec: &ModelSpec) -> Result<f64> {
    if !spec.kind.is_two_component() {
        return Err(Error::contract(format!(
            "log_prior_biexnex called for {}",
            spec.kind
        )));
    }
    if let Some((k, c)) = state
        .z
        .iter()
        .enumerate()
        .find(|(_, c)| matches!(c, Component::ToxOnly | Component::EffOnly))
    {
        return Err(Error::contract(format!(
            "indicator {c:?} of subtrial {} is not an EX/NEX label",
            k + 1
        )));
    }
    log_prior_mixture(state, spec)
}

/// Log prior for E-BiEXNEX and IndEXNEX, conditional on the indicators.
pub fn log_prior_ebiexnex(state: &ParamState, spec: &ModelSpec) -> Result<f64> {
    if spec.kind.is_two_component() {
        return Err(Error::contract(format!(
            "log_prior_ebiexnex called for {}",
            spec.kind
        )));
    }
    spec.validate()?;
    log_prior_mixture(state, spec)
}

/// Log prior for any kind.
pub fn log_prior(state: &ParamState, spec: &ModelSpec) -> Result<f64> {
    if spec.kind.is_two_component() {
        log_prior_biexnex(state, spec)
    } else {
        log_prior_ebiexnex(state, spec)
    }
}

/// Unnormalised log posterior.
pub fn log_posterior(data: &TrialData, state: &ParamState, spec: &ModelSpec) -> Result<f64> {
    Ok(log_likelihood(data, state)? + log_prior(state, spec)?)
}

/// Pr(Zₖ = c | θₖ, hyperparameters) for every component, in [`Component`] order.
pub fn indicator_full_conditional(state: &ParamState, spec: &ModelSpec, k: usize) -> [f64; 4] {
    let theta = [state.theta_t[k], state.theta_e[k]];
    let mut lw = [f64::NEG_INFINITY; 4];
    for c in spec.support(k) {
        lw[c.index()] =
            spec.weights[k][c.index()].ln() + component_ln_density(c, theta, state, spec, k);
    }
    let norm = log_sum_exp(&lw);
    lw.map(|l| if l == f64::NEG_INFINITY { 0.0 } else { (l - norm).exp() })
}

/// Posterior marginal exchangeability weights per subtrial: the fraction of
/// draws whose indicator makes θᵗ (respectively θᵉ) exchangeable.
pub fn marginal_exchangeability_weights(draws: &PosteriorDraws) -> Result<Vec<(f64, f64)>> {
    let total = draws.n_draws();
    if total == 0 {
        return Err(Error::contract("no posterior draws"));
    }
    let k = draws.n_subtrials();
    let mut tox = vec![0usize; k];
    let mut eff = vec![0usize; k];
    for chain in &draws.chains {
        for row in chain.indicators.chunks_exact(k) {
            for (i, &c) in row.iter().enumerate() {
                let c = Component::from_index(c as usize);
                tox[i] += usize::from(c.tox_exchangeable());
                eff[i] += usize::from(c.eff_exchangeable());
            }
        }
    }
    let n = total as f64;
    Ok(tox
        .into_iter()
        .zip(eff)
        .map(|(t, e)| (t as f64 / n, e as f64 / n))
        .collect())
}

/// Per-arm sufficient statistics used by the sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ArmStats {
    pub n: u32,
    pub tox: u32,
    pub eff_n: u32,
    pub eff_mean: f64,
    /// Σ (z − mean)².
    pub eff_ss: f64,
}

impl ArmStats {
    /// Toxicity log-likelihood without the binomial coefficient.
    #[inline]
    pub fn tox_kernel(&self, eta: f64) -> f64 {
        f64::from(self.tox) * eta - f64::from(self.n) * crate::stats::special::softplus(eta)
    }

    /// Efficacy log-likelihood, normalising constant included.
    #[inline]
    pub fn eff_ln_lik(&self, mean: f64, sd: f64) -> f64 {
        if self.eff_n == 0 {
            return 0.0;
        }
        let n = f64::from(self.eff_n);
        let d = self.eff_mean - mean;
        -n * (0.5 * LN_2PI + sd.ln()) - (self.eff_ss + n * d * d) / (2.0 * sd * sd)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialStats {
    /// Indexed `[subtrial][arm]`.
    pub arms: Vec<[ArmStats; 2]>,
    /// Σ ln C(n, y), the constant dropped by [`ArmStats::tox_kernel`].
    pub ln_choose_total: f64,
}

impl TrialStats {
    pub fn new(data: &TrialData) -> Self {
        let mut ln_choose_total = 0.0;
        let arms = data
            .subtrials
            .iter()
            .map(|sub| {
                Arm::BOTH.map(|arm| {
                    let a = sub.arm(arm);
                    ln_choose_total += ln_choose(a.n, a.tox);
                    let m = a.efficacy.len();
                    let mean = if m > 0 {
                        a.efficacy.iter().sum::<f64>() / m as f64
                    } else {
                        0.0
                    };
                    let ss = a.efficacy.iter().map(|z| (z - mean) * (z - mean)).sum();
                    ArmStats {
                        n: a.n,
                        tox: a.tox,
                        eff_n: m as u32,
                        eff_mean: mean,
                        eff_ss: ss,
                    }
                })
            })
            .collect();
        TrialStats {
            arms,
            ln_choose_total,
        }
    }

    pub fn n_subtrials(&self) -> usize {
        self.arms.len()
    }

    /// Toxicity kernel of subtrial `k`.
    #[inline]
    pub fn tox_kernel(&self, k: usize, alpha: f64, theta: f64) -> f64 {
        self.arms[k][0].tox_kernel(alpha) + self.arms[k][1].tox_kernel(alpha + theta)
    }

    /// Efficacy log-likelihood of subtrial `k`.
    #[inline]
    pub fn eff_ln_lik(&self, k: usize, alpha: f64, theta: f64, sigma: [f64; 2]) -> f64 {
        self.arms[k][0].eff_ln_lik(alpha, sigma[0]) + self.arms[k][1].eff_ln_lik(alpha + theta, sigma[1])
    }

    /// Same value as [`log_likelihood`], from the sufficient statistics.
    pub fn log_likelihood(&self, state: &ParamState) -> f64 {
        let mut total = self.ln_choose_total;
        for k in 0..self.n_subtrials() {
            total += self.tox_kernel(k, state.alpha_t[k], state.theta_t[k]);
            total += self.eff_ln_lik(k, state.alpha_e[k], state.theta_e[k], state.sigma[k]);
        }
        total
    }
}
