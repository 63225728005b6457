//! Simulated basket-trial data: binary toxicity and continuous efficacy per patient.
//!
//! Each patient gets a latent pair (x, z) from a bivariate normal. Toxicity is
//! I(x ≤ T) and z is the efficacy response. Treatment arms shift the latent
//! toxicity mean so that the toxicity rate moves by θᵗ on the logit scale,
//! and shift the efficacy mean by θᵉ.

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::stats::rng::tag;
use crate::stats::{
    inv_logit, logit, normal_cdf, normal_quantile, sample_bivariate_normal,
    BivariateNormalParams, RngStream,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control = 0,
    Treatment = 1,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treatment];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Control => "C",
            Arm::Treatment => "E",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        match s.trim() {
            "C" | "c" | "control" => Some(Arm::Control),
            "E" | "e" | "treatment" | "experimental" => Some(Arm::Treatment),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Observations for one arm of one subtrial.
///
/// `n` counts patients assessed for toxicity. `efficacy` may be empty when
/// the efficacy endpoint is not observed; generated data always has
/// `efficacy.len() == n`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmData {
    pub n: u32,
    pub tox: u32,
    pub efficacy: Vec<f64>,
}

impl ArmData {
    pub fn new(n: u32, tox: u32, efficacy: Vec<f64>) -> Result<Self> {
        if tox > n {
            return Err(Error::Input(format!("toxicity count {tox} exceeds n = {n}")));
        }
        if efficacy.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite efficacy observation".into()));
        }
        Ok(Self { n, tox, efficacy })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubtrialData {
    /// Indexed by [`Arm::index`].
    pub arms: [ArmData; 2],
}

impl SubtrialData {
    pub fn arm(&self, arm: Arm) -> &ArmData {
        &self.arms[arm.index()]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialData {
    pub subtrials: Vec<SubtrialData>,
}

impl TrialData {
    /// K subtrials with no observations at all.
    pub fn empty(k: usize) -> Self {
        TrialData {
            subtrials: vec![SubtrialData::default(); k],
        }
    }

    pub fn n_subtrials(&self) -> usize {
        self.subtrials.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.subtrials.is_empty() {
            return Err(Error::Input("trial has no subtrials".into()));
        }
        for (k, s) in self.subtrials.iter().enumerate() {
            for arm in Arm::BOTH {
                let a = s.arm(arm);
                if a.tox > a.n {
                    return Err(Error::Input(format!(
                        "subtrial {}, arm {}: toxicity count {} exceeds n = {}",
                        k + 1,
                        arm.label(),
                        a.tox,
                        a.n
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One patient: (toxicity indicator I(x ≤ threshold), efficacy z) from a
/// latent pair (x, z).
pub fn draw_patient(params: &BivariateNormalParams, threshold: f64, rng: &mut RngStream) -> (bool, f64) {
    let [x, z] = sample_bivariate_normal(params, rng);
    (x <= threshold, z)
}

/// Draw `n` patients and return (toxicity count, efficacy observations).
pub fn generate_arm(
    params: &BivariateNormalParams,
    threshold: f64,
    n: u32,
    rng: &mut RngStream,
) -> (u32, Vec<f64>) {
    let mut tox = 0;
    let mut eff = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let (y, z) = draw_patient(params, threshold, rng);
        tox += u32::from(y);
        eff.push(z);
    }
    (tox, eff)
}

/// Latent toxicity mean of the treatment arm whose toxicity rate is
/// inv_logit(logit(p_control) + theta_t).
pub fn treatment_latent_mean(p_control: f64, theta_t: f64, threshold: f64, sd: f64) -> Result<f64> {
    let p_treat = inv_logit(logit(p_control)? + theta_t);
    if !(p_treat > 0.0 && p_treat < 1.0) {
        return Err(Error::UnreachableRate {
            subtrial: 0,
            p: p_treat,
        });
    }
    normal_quantile(1.0 - p_treat, threshold, sd).map_err(|_| Error::UnreachableRate {
        subtrial: 0,
        p: p_treat,
    })
}

/// Latent bivariate-normal parameters of (control, treatment) for subtrial `k`.
pub fn arm_generation_params(s: &Scenario, k: usize) -> Result<[BivariateNormalParams; 2]> {
    let [sd1, sd2] = s.sd_latent;
    let mu1_c = s.mu1_control[k];
    let mu2_c = mu1_c + s.efficacy_offset;
    let p_c = normal_cdf(s.threshold, mu1_c, sd1)?;
    let mu1_e = treatment_latent_mean(p_c, s.theta_t[k], s.threshold, sd1).map_err(|e| match e {
        Error::UnreachableRate { p, .. } => Error::UnreachableRate { subtrial: k + 1, p },
        other => other,
    })?;
    let mu2_e = mu2_c + s.theta_e[k];
    Ok([
        BivariateNormalParams::new([mu1_c, mu2_c], [sd1, sd2], s.gen_corr_control)?,
        BivariateNormalParams::new([mu1_e, mu2_e], [sd1, sd2], s.gen_corr_treatment)?,
    ])
}

/// One simulated trial. Every (replicate, subtrial, arm) uses its own stream
/// derived from `seed`, so adding or reordering subtrials leaves other arms'
/// data unchanged.
pub fn generate_trial(s: &Scenario, seed: u64, replicate: u64) -> Result<TrialData> {
    s.validate()?;
    let mut subtrials = Vec::with_capacity(s.n_subtrials());
    for k in 0..s.n_subtrials() {
        let params = arm_generation_params(s, k)?;
        let mut arms: [ArmData; 2] = Default::default();
        for arm in Arm::BOTH {
            let mut rng =
                RngStream::for_path(seed, &[tag::DATA, replicate, k as u64, arm.index() as u64]);
            let n = s.arm_sizes[k];
            let (tox, efficacy) = generate_arm(&params[arm.index()], s.threshold, n, &mut rng);
            arms[arm.index()] = ArmData { n, tox, efficacy };
        }
        subtrials.push(SubtrialData { arms });
    }
    Ok(TrialData { subtrials })
}
