//! Run configuration: a strict TOML schema resolved into library types.

use bibasket::decisions::{DecisionRuleSpec, RuleKind};
use bibasket::mcmc::McmcConfig;
use bibasket::models::{ModelKind, ModelSpec, PriorSpec};
use bibasket::scenario::{find_builtin, Scenario};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field { field: field.into(), message: message.into() }
    }
}

/// A scalar applied to every subtrial or one value per subtrial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSubtrial<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Clone> PerSubtrial<T> {
    fn expand(&self, k: usize, field: &str) -> Result<Vec<T>, ConfigError> {
        match self {
            PerSubtrial::All(v) => Ok(vec![v.clone(); k]),
            PerSubtrial::Each(v) if v.len() == k => Ok(v.clone()),
            PerSubtrial::Each(v) => {
                Err(ConfigError::field(field, format!("expected 1 or {k} values, got {}", v.len())))
            }
        }
    }
}

/// Top-level configuration document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub n_reps: Option<usize>,
    pub out: Option<PathBuf>,
    pub emit_plots: Option<bool>,
    /// Also write the per-replicate Go matrix of an OC run.
    pub go_matrix: Option<bool>,
    /// Built-in scenario names.
    pub scenarios: Vec<String>,
    /// Inline scenarios, optionally based on a built-in one.
    pub scenario: Vec<ScenarioEntry>,
    pub model: Vec<ModelEntry>,
    pub prior: PriorOverrides,
    pub mcmc: McmcConfig,
    pub decision: DecisionConfig,
    pub fit: FitConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub name: String,
    /// Built-in scenario whose fields are used where this entry is silent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_e: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1_control: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficacy_offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen_corr_control: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen_corr_treatment: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd_latent: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm_sizes: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// BiEXNEX exchangeability weight.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<PerSubtrial<f64>>,
    /// IndEXNEX toxicity and efficacy weights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_t: Option<PerSubtrial<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_e: Option<PerSubtrial<f64>>,
    /// E-BiEXNEX component weights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<PerSubtrial<[f64; 4]>>,
    /// Hold ρ or κ at a value instead of estimating it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Per-model thresholds; replace calibration for this model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta2: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_halfnormal_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_halfnormal_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nex_mean: Option<PerSubtrial<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nex_sd: Option<PerSubtrial<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    pub rule: RuleKind,
    pub delta: f64,
    /// Margin defining desirable subtrials; defaults to `delta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_truth: Option<f64>,
    /// Common thresholds. When unset, thresholds are calibrated per model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta2: Option<f64>,
    pub target_error: f64,
    pub calibration_scenario: String,
    /// Calibration replicates; defaults to `n_reps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_reps: Option<usize>,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        DecisionConfig {
            rule: RuleKind::Joint,
            delta: 0.0,
            delta_truth: None,
            eta: None,
            eta1: None,
            eta2: None,
            target_error: 0.10,
            calibration_scenario: "Global Null".into(),
            calibration_reps: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Arm table (subtrial, arm, n, tox_count).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arms: Option<PathBuf>,
    /// Long-format efficacy table (subtrial, arm, value).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficacy: Option<PathBuf>,
    /// Scenario to generate data from when no arm table is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicate: Option<u64>,
    /// Also write every retained draw.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_draws: Option<bool>,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_N_REPS: usize = 500;

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("configuration serialises")
}

fn check_probability(field: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::field(field, format!("{v} is outside [0, 1]")))
    }
}

fn check_threshold(field: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(v) if !(0.0..1.0).contains(&v) => Err(ConfigError::field(field, format!("{v} is outside [0, 1)"))),
        _ => Ok(()),
    }
}

fn values<T: Clone>(p: &PerSubtrial<T>) -> Vec<T> {
    match p {
        PerSubtrial::All(v) => vec![v.clone()],
        PerSubtrial::Each(v) => v.clone(),
    }
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn n_reps(&self) -> usize {
        self.n_reps.unwrap_or(DEFAULT_N_REPS)
    }

    pub fn emit_plots(&self) -> bool {
        self.emit_plots.unwrap_or(false)
    }

    /// Checks that do not depend on the number of subtrials.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_reps == Some(0) {
            return Err(ConfigError::field("n_reps", "must be at least 1"));
        }
        for name in &self.scenarios {
            if find_builtin(name).is_none() {
                return Err(ConfigError::field("scenarios", format!("unknown scenario '{name}'")));
            }
        }
        for (i, s) in self.scenario.iter().enumerate() {
            if let Some(base) = &s.base {
                if find_builtin(base).is_none() {
                    return Err(ConfigError::field(format!("scenario[{i}].base"), format!("unknown scenario '{base}'")));
                }
            }
        }
        for (i, m) in self.model.iter().enumerate() {
            let at = |f: &str| format!("model[{i}].{f}");
            let allowed: &[&str] = match m.kind {
                ModelKind::Bhm | ModelKind::Sa => &[],
                ModelKind::BiExnex => &["omega"],
                ModelKind::EBiExnex => &["lambda"],
                ModelKind::IndExnex => &["omega_t", "omega_e"],
            };
            let given = [
                ("omega", m.omega.is_some()),
                ("omega_t", m.omega_t.is_some()),
                ("omega_e", m.omega_e.is_some()),
                ("lambda", m.lambda.is_some()),
            ];
            for (f, present) in given {
                if present && !allowed.contains(&f) {
                    return Err(ConfigError::field(at(f), format!("not a weight of {}", m.kind)));
                }
            }
            for f in ["omega", "omega_t", "omega_e"] {
                let w = match f {
                    "omega" => &m.omega,
                    "omega_t" => &m.omega_t,
                    _ => &m.omega_e,
                };
                for v in w.iter().flat_map(values) {
                    check_probability(&at(f), v)?;
                }
            }
            for row in m.lambda.iter().flat_map(values) {
                for v in row {
                    check_probability(&at("lambda"), v)?;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(ConfigError::field(at("lambda"), format!("weights {row:?} sum to {sum}, not 1")));
                }
            }
            for (f, v) in [("rho", m.rho), ("kappa", m.kappa)] {
                if let Some(v) = v {
                    if !(-1.0..=1.0).contains(&v) {
                        return Err(ConfigError::field(at(f), format!("{v} is outside [-1, 1]")));
                    }
                }
            }
            check_threshold(&at("eta"), m.eta)?;
            check_threshold(&at("eta1"), m.eta1)?;
            check_threshold(&at("eta2"), m.eta2)?;
        }
        let d = &self.decision;
        check_threshold("decision.eta", d.eta)?;
        check_threshold("decision.eta1", d.eta1)?;
        check_threshold("decision.eta2", d.eta2)?;
        if !d.delta.is_finite() {
            return Err(ConfigError::field("decision.delta", "must be finite"));
        }
        if !(d.target_error > 0.0 && d.target_error <= 1.0) {
            return Err(ConfigError::field("decision.target_error", format!("{} is outside (0, 1]", d.target_error)));
        }
        if find_builtin(&d.calibration_scenario).is_none() && !self.scenario.iter().any(|s| s.name == d.calibration_scenario) {
            return Err(ConfigError::field(
                "decision.calibration_scenario",
                format!("unknown scenario '{}'", d.calibration_scenario),
            ));
        }
        if d.calibration_reps == Some(0) {
            return Err(ConfigError::field("decision.calibration_reps", "must be at least 1"));
        }
        self.mcmc.validate().map_err(|e| ConfigError::field("mcmc", e.to_string()))?;
        if self.fit.efficacy.is_some() && self.fit.arms.is_none() {
            return Err(ConfigError::field("fit.efficacy", "requires fit.arms"));
        }
        Ok(())
    }

    /// Named built-in scenarios followed by inline ones.
    pub fn resolve_scenarios(&self) -> Result<Vec<Scenario>, ConfigError> {
        let mut out: Vec<Scenario> = self.scenarios.iter().map(|n| find_builtin(n).unwrap()).collect();
        for (i, e) in self.scenario.iter().enumerate() {
            out.push(e.resolve().map_err(|m| ConfigError::field(format!("scenario[{i}]"), m))?);
        }
        Ok(out)
    }

    /// A scenario by name among inline entries, then built-ins.
    pub fn scenario_named(&self, name: &str) -> Result<Scenario, ConfigError> {
        if let Some((i, e)) = self.scenario.iter().enumerate().find(|(_, e)| e.name == name) {
            return e.resolve().map_err(|m| ConfigError::field(format!("scenario[{i}]"), m));
        }
        find_builtin(name).ok_or_else(|| ConfigError::field("scenario", format!("unknown scenario '{name}'")))
    }

    pub fn prior(&self, k: usize) -> Result<PriorSpec, ConfigError> {
        let d = PriorSpec::defaults(k);
        let p = &self.prior;
        let prior = PriorSpec {
            alpha_sd: p.alpha_sd.unwrap_or(d.alpha_sd),
            sigma_halfnormal_var: p.sigma_halfnormal_var.unwrap_or(d.sigma_halfnormal_var),
            beta_sd: p.beta_sd.unwrap_or(d.beta_sd),
            phi_halfnormal_var: p.phi_halfnormal_var.unwrap_or(d.phi_halfnormal_var),
            nex_mean: match &p.nex_mean {
                Some(v) => v.expand(k, "prior.nex_mean")?,
                None => d.nex_mean,
            },
            nex_sd: match &p.nex_sd {
                Some(v) => v.expand(k, "prior.nex_sd")?,
                None => d.nex_sd,
            },
        };
        prior.validate(k).map_err(|e| ConfigError::field("prior", e.to_string()))?;
        Ok(prior)
    }

    /// Model specifications for `k` subtrials; all five reference models
    /// when the document lists none.
    pub fn models(&self, k: usize) -> Result<Vec<ModelSpec>, ConfigError> {
        let prior = self.prior(k)?;
        if self.model.is_empty() {
            return Ok(ModelKind::ALL
                .iter()
                .map(|&kind| ModelSpec { prior: prior.clone(), ..ModelSpec::reference(kind, k) })
                .collect());
        }
        let mut specs: Vec<ModelSpec> = Vec::new();
        for (i, m) in self.model.iter().enumerate() {
            let at = |f: &str| format!("model[{i}].{f}");
            let half = PerSubtrial::All(0.5);
            let mut spec = match m.kind {
                ModelKind::Bhm => ModelSpec::bhm(prior.clone()),
                ModelKind::Sa => ModelSpec::sa(prior.clone()),
                ModelKind::BiExnex => {
                    ModelSpec::biexnex(&m.omega.as_ref().unwrap_or(&half).expand(k, &at("omega"))?, prior.clone())
                }
                ModelKind::EBiExnex => {
                    let quarter = PerSubtrial::All([0.25; 4]);
                    ModelSpec::ebiexnex(&m.lambda.as_ref().unwrap_or(&quarter).expand(k, &at("lambda"))?, prior.clone())
                }
                ModelKind::IndExnex => ModelSpec::indexnex(
                    &m.omega_t.as_ref().unwrap_or(&half).expand(k, &at("omega_t"))?,
                    &m.omega_e.as_ref().unwrap_or(&half).expand(k, &at("omega_e"))?,
                    prior.clone(),
                ),
            };
            if let Some(r) = m.rho {
                spec.fixed_rho = Some(r);
            }
            if let Some(c) = m.kappa {
                spec.fixed_kappa = Some(c);
            }
            if let Some(name) = &m.name {
                spec = spec.with_name(name.clone());
            }
            spec.validate().map_err(|e| ConfigError::field(format!("model[{i}]"), e.to_string()))?;
            if specs.iter().any(|s| s.name == spec.name) {
                return Err(ConfigError::field(
                    at("name"),
                    format!("duplicate model name '{}'; set a distinct name", spec.name),
                ));
            }
            specs.push(spec);
        }
        Ok(specs)
    }

    /// The rule template for model `i` and whether its thresholds are fixed
    /// (true) or still to be calibrated (false).
    pub fn rule_for(&self, i: Option<usize>) -> (DecisionRuleSpec, bool) {
        let d = &self.decision;
        let m = i.and_then(|i| self.model.get(i));
        let eta = m.and_then(|m| m.eta).or(d.eta);
        let eta1 = m.and_then(|m| m.eta1).or(d.eta1);
        let eta2 = m.and_then(|m| m.eta2).or(d.eta2);
        match d.rule {
            RuleKind::Joint => match eta {
                Some(e) => (DecisionRuleSpec::joint(e, d.delta), true),
                None => (DecisionRuleSpec::joint(0.5, d.delta), false),
            },
            RuleKind::Separate => match (eta1, eta2) {
                (Some(a), Some(b)) => (DecisionRuleSpec::separate(a, b, d.delta), true),
                (a, b) => {
                    let e = a.or(b).unwrap_or(0.5);
                    (DecisionRuleSpec::separate(e, e, d.delta), false)
                }
            },
        }
    }

    pub fn delta_truth(&self) -> f64 {
        self.decision.delta_truth.unwrap_or(self.decision.delta)
    }
}

impl ScenarioEntry {
    fn resolve(&self) -> Result<Scenario, String> {
        let base = match &self.base {
            Some(b) => find_builtin(b).ok_or_else(|| format!("unknown base scenario '{b}'"))?,
            None => {
                let (t, e) = match (&self.theta_t, &self.theta_e) {
                    (Some(t), Some(e)) => (t, e),
                    _ => return Err("theta_t and theta_e are required without a base scenario".into()),
                };
                let k = t.len();
                let sizes = self.arm_sizes.clone().unwrap_or_else(|| {
                    bibasket::scenario::DEFAULT_ARM_SIZES.iter().copied().cycle().take(k).collect()
                });
                let mut s = Scenario::with_effects(&self.name, t, e, &sizes);
                if k != 6 {
                    s.mu1_control = bibasket::scenario::DEFAULT_MU1_CONTROL.iter().copied().cycle().take(k).collect();
                }
                s
            }
        };
        let s = Scenario {
            name: self.name.clone(),
            theta_t: self.theta_t.clone().unwrap_or(base.theta_t),
            theta_e: self.theta_e.clone().unwrap_or(base.theta_e),
            mu1_control: self.mu1_control.clone().unwrap_or(base.mu1_control),
            efficacy_offset: self.efficacy_offset.unwrap_or(base.efficacy_offset),
            threshold: self.threshold.unwrap_or(base.threshold),
            gen_corr_control: self.gen_corr_control.unwrap_or(base.gen_corr_control),
            gen_corr_treatment: self.gen_corr_treatment.unwrap_or(base.gen_corr_treatment),
            sd_latent: self.sd_latent.unwrap_or(base.sd_latent),
            arm_sizes: self.arm_sizes.clone().unwrap_or(base.arm_sizes),
        };
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}
