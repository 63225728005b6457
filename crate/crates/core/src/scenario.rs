//! Simulation scenarios and the built-in scenario library.

use crate::error::{Error, Result};
use crate::stats::{inv_logit, logit, normal_cdf};
use serde::{Deserialize, Serialize};

/// Latent toxicity means of the control arms in the reference design.
pub const DEFAULT_MU1_CONTROL: [f64; 6] = [1.2, 1.5, 1.02, 0.88, 1.05, 0.96];
/// Per-arm sizes n_Ck = n_Ek of the reference design.
pub const DEFAULT_ARM_SIZES: [u32; 6] = [10, 10, 10, 6, 12, 10];
/// Halved per-arm sizes of the small-sample sub-scenarios.
pub const SMALL_ARM_SIZES: [u32; 6] = [5, 5, 5, 3, 6, 5];

/// True effects and data-generation settings for one simulated basket trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Toxicity effects on the log-odds scale.
    pub theta_t: Vec<f64>,
    /// Efficacy mean differences.
    pub theta_e: Vec<f64>,
    /// Latent toxicity mean of each control arm.
    pub mu1_control: Vec<f64>,
    /// Control efficacy mean minus control latent toxicity mean.
    pub efficacy_offset: f64,
    /// Dichotomisation cut: toxicity iff latent ≤ threshold.
    pub threshold: f64,
    pub gen_corr_control: f64,
    pub gen_corr_treatment: f64,
    /// Latent toxicity SD and efficacy SD, shared by every arm.
    pub sd_latent: [f64; 2],
    /// Patients per arm; both arms of a subtrial have this size.
    pub arm_sizes: Vec<u32>,
}

/// Whether a subtrial's true treatment is worth a Go decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthLabel {
    Desirable,
    Null,
}

/// Theoretical per-subtrial arm quantities implied by a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmSummary {
    pub p_control: f64,
    pub p_treatment: f64,
    pub mu_control: f64,
    pub mu_treatment: f64,
}

impl Scenario {
    /// A scenario with the reference design's control arms and settings.
    pub fn with_effects(name: &str, theta_t: &[f64], theta_e: &[f64], arm_sizes: &[u32]) -> Self {
        Scenario {
            name: name.to_string(),
            theta_t: theta_t.to_vec(),
            theta_e: theta_e.to_vec(),
            mu1_control: DEFAULT_MU1_CONTROL.to_vec(),
            efficacy_offset: 2.0,
            threshold: 0.8,
            gen_corr_control: 0.8,
            gen_corr_treatment: 0.8,
            sd_latent: [1.0, 1.0],
            arm_sizes: arm_sizes.to_vec(),
        }
    }

    pub fn n_subtrials(&self) -> usize {
        self.theta_t.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.theta_t.len();
        if k == 0 {
            return Err(Error::contract(format!("scenario '{}' has no subtrials", self.name)));
        }
        for (field, len) in [
            ("theta_e", self.theta_e.len()),
            ("mu1_control", self.mu1_control.len()),
            ("arm_sizes", self.arm_sizes.len()),
        ] {
            if len != k {
                return Err(Error::contract(format!(
                    "scenario '{}': {field} has length {len}, expected {k}",
                    self.name
                )));
            }
        }
        if self.arm_sizes.contains(&0) {
            return Err(Error::contract(format!(
                "scenario '{}': arm sizes must be at least 1",
                self.name
            )));
        }
        if !(self.sd_latent[0] > 0.0 && self.sd_latent[1] > 0.0) {
            return Err(Error::contract(format!(
                "scenario '{}': latent SDs must be positive",
                self.name
            )));
        }
        for (field, r) in [
            ("gen_corr_control", self.gen_corr_control),
            ("gen_corr_treatment", self.gen_corr_treatment),
        ] {
            if !(-1.0..=1.0).contains(&r) {
                return Err(Error::contract(format!(
                    "scenario '{}': {field} = {r} outside [-1, 1]",
                    self.name
                )));
            }
        }
        let all = self
            .theta_t
            .iter()
            .chain(&self.theta_e)
            .chain(&self.mu1_control)
            .chain([&self.efficacy_offset, &self.threshold]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "scenario '{}' contains non-finite values",
                self.name
            )));
        }
        Ok(())
    }
}

/// Every scenario from the reference simulation study.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let n = &DEFAULT_ARM_SIZES;
    let zeros = [0.0; 6];
    let mut out = vec![
        Scenario::with_effects("Global Null", &zeros, &zeros, n),
        Scenario::with_effects("1a", &zeros, &[0.75; 6], n),
        Scenario::with_effects("1b", &zeros, &[2.25; 6], n),
        Scenario::with_effects("1c", &zeros, &[0.0, 0.75, 1.75, 4.0, 8.0, 12.0], n),
        Scenario::with_effects("2a", &[-1.25; 6], &zeros, n),
        Scenario::with_effects("2b", &[-2.5; 6], &zeros, n),
        Scenario::with_effects("2c", &[0.0, -0.55, -1.55, -3.1, -6.6, -9.5], &zeros, n),
        Scenario::with_effects(
            "Ia",
            &[-0.8, -0.68, -0.72, -0.77, -0.96, -0.92],
            &[0.76, 0.82, 0.69, 0.72, 0.75, 0.66],
            n,
        ),
        Scenario::with_effects(
            "Ib",
            &[-0.95, -0.82, -1.07, 0.20, -1.67, -2.10],
            &[0.77, 0.73, 0.80, 1.80, -0.46, -1.20],
            n,
        ),
        Scenario::with_effects(
            "IIa",
            &[-1.4, 1.4, 0.87, -2.2, 0.15, -0.8],
            &[-1.77, 0.05, 0.68, 1.80, -0.46, 2.12],
            n,
        ),
        Scenario::with_effects(
            "IIb",
            &[-1.4, 1.4, -0.87, -2.2, 0.15, 0.8],
            &[1.43, -1.66, 1.08, 1.46, -0.02, -1.84],
            n,
        ),
        Scenario::with_effects(
            "IIIa",
            &[-1.5, 2.34, 0.87, -0.55, -3.0, 4.22],
            &[1.0; 6],
            n,
        ),
        Scenario::with_effects(
            "IIIb",
            &[-1.2; 6],
            &[-1.27, 3.48, 2.78, -0.02, 1.15, -0.12],
            n,
        ),
    ];
    // Small-sample variants: efficacy (1.x) or toxicity (2.x) held common.
    let small = &SMALL_ARM_SIZES;
    let tox_series: [(&str, [f64; 6]); 4] = [
        ("1.1", [-0.69, -1.2, -1.24, -0.74, -1.04, -0.8]),
        ("1.2", [-0.97, -0.6, -1.09, -0.48, 0.38, -1.72]),
        ("1.3", [-3.82, -1.24, -0.4, 0.12, 0.11, 0.36]),
        ("1.4", [-2.46, 4.17, -0.28, -2.64, 0.79, -2.83]),
    ];
    for (name, tt) in tox_series {
        out.push(Scenario::with_effects(name, &tt, &[1.0; 6], small));
    }
    let eff_series: [(&str, [f64; 6]); 4] = [
        ("2.1", [0.77, 1.40, 1.15, 0.86, 1.25, 0.90]),
        ("2.2", [2.15, 0.36, 1.08, 1.86, 0.89, 0.47]),
        ("2.3", [2.86, 1.27, -1.51, -0.59, -0.68, 0.43]),
        ("2.4", [-1.26, 4.70, -3.55, 0.09, -3.18, 2.13]),
    ];
    for (name, te) in eff_series {
        out.push(Scenario::with_effects(name, &[-1.2; 6], &te, small));
    }
    out
}

/// Look up a built-in scenario by name (case-insensitive).
pub fn find_builtin(name: &str) -> Option<Scenario> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
}

/// Desirable iff the treatment is less toxic (θᵗ < 0) and more efficacious
/// than the margin (θᵉ > δ). Effects exactly on the boundary are null.
pub fn truth_labels(s: &Scenario, delta_truth: f64) -> Vec<TruthLabel> {
    s.theta_t
        .iter()
        .zip(&s.theta_e)
        .map(|(&t, &e)| {
            if t < 0.0 && e > delta_truth {
                TruthLabel::Desirable
            } else {
                TruthLabel::Null
            }
        })
        .collect()
}

/// Toxicity rates and efficacy means implied for each arm.
pub fn expected_arm_summaries(s: &Scenario) -> Result<Vec<ArmSummary>> {
    s.validate()?;
    (0..s.n_subtrials())
        .map(|k| {
            let p_control = normal_cdf(s.threshold, s.mu1_control[k], s.sd_latent[0])?;
            let p_treatment = inv_logit(logit(p_control)? + s.theta_t[k]);
            let mu_control = s.mu1_control[k] + s.efficacy_offset;
            Ok(ArmSummary {
                p_control,
                p_treatment,
                mu_control,
                mu_treatment: mu_control + s.theta_e[k],
            })
        })
        .collect()
}
