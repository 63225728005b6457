//! Go/No-go rules on posterior draws and threshold calibration.

use crate::error::{Error, Result};
use crate::mcmc::{McmcConfig, PosteriorDraws};
use crate::models::ModelSpec;
use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    /// Go iff Pr(θᵗ < 0) > η₁ and Pr(θᵉ > δ) > η₂.
    Separate,
    /// Go iff Pr(θᵗ < 0 and θᵉ > δ) > η.
    Joint,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::Separate => "separate",
            RuleKind::Joint => "joint",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRuleSpec {
    pub rule: RuleKind,
    pub eta1: f64,
    pub eta2: f64,
    pub eta: f64,
    /// Efficacy margin δ.
    pub delta: f64,
}

impl Default for DecisionRuleSpec {
    fn default() -> Self {
        DecisionRuleSpec {
            rule: RuleKind::Joint,
            eta1: 0.8,
            eta2: 0.8,
            eta: 0.8,
            delta: 0.0,
        }
    }
}

impl DecisionRuleSpec {
    pub fn joint(eta: f64, delta: f64) -> Self {
        DecisionRuleSpec {
            rule: RuleKind::Joint,
            eta1: eta,
            eta2: eta,
            eta,
            delta,
        }
    }

    pub fn separate(eta1: f64, eta2: f64, delta: f64) -> Self {
        DecisionRuleSpec {
            rule: RuleKind::Separate,
            eta1,
            eta2,
            eta: eta1.min(eta2),
            delta,
        }
    }

    /// Thresholds must lie in [0, 1); δ must be finite (±∞ is allowed as a limit).
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2), ("eta", self.eta)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::contract(format!("decision.{name} = {v} outside [0, 1)")));
            }
        }
        if self.delta.is_nan() {
            return Err(Error::contract("decision.delta is NaN"));
        }
        Ok(())
    }

    /// Same rule with every threshold set to `eta`.
    pub fn with_threshold(&self, eta: f64) -> Self {
        DecisionRuleSpec {
            eta1: eta,
            eta2: eta,
            eta,
            ..*self
        }
    }

    pub fn go(&self, p: &DecisionProbs) -> bool {
        match self.rule {
            RuleKind::Separate => p.prob_tox > self.eta1 && p.prob_eff > self.eta2,
            RuleKind::Joint => p.prob_joint > self.eta,
        }
    }
}

/// Posterior probabilities behind a subtrial's decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionProbs {
    /// Pr(θᵗ < 0 | D).
    pub prob_tox: f64,
    /// Pr(θᵉ > δ | D).
    pub prob_eff: f64,
    /// Pr(θᵗ < 0 and θᵉ > δ | D).
    pub prob_joint: f64,
}

impl DecisionProbs {
    /// The statistic compared with a common threshold η under `rule`.
    pub fn statistic(&self, rule: RuleKind) -> f64 {
        match rule {
            RuleKind::Joint => self.prob_joint,
            RuleKind::Separate => self.prob_tox.min(self.prob_eff),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtrialDecision {
    pub go: bool,
    pub probs: DecisionProbs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub rule: DecisionRuleSpec,
    pub subtrials: Vec<SubtrialDecision>,
}

/// Draw frequencies of the toxicity, efficacy and joint events per subtrial.
pub fn decision_probabilities(draws: &PosteriorDraws, delta: f64) -> Result<Vec<DecisionProbs>> {
    let n = draws.n_draws();
    if n == 0 {
        return Err(Error::contract("no posterior draws"));
    }
    Ok((0..draws.n_subtrials())
        .map(|k| {
            let (mut t, mut e, mut j) = (0usize, 0usize, 0usize);
            for (tt, te) in draws.theta_pairs(k) {
                let a = tt < 0.0;
                let b = te > delta;
                t += usize::from(a);
                e += usize::from(b);
                j += usize::from(a && b);
            }
            let nf = n as f64;
            DecisionProbs {
                prob_tox: t as f64 / nf,
                prob_eff: e as f64 / nf,
                prob_joint: j as f64 / nf,
            }
        })
        .collect())
}

pub fn decide(draws: &PosteriorDraws, spec: &DecisionRuleSpec) -> Result<DecisionOutcome> {
    spec.validate()?;
    let probs = decision_probabilities(draws, spec.delta)?;
    Ok(DecisionOutcome {
        rule: *spec,
        subtrials: probs
            .into_iter()
            .map(|p| SubtrialDecision { go: spec.go(&p), probs: p })
            .collect(),
    })
}

/// Result of a Global-Null threshold calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub rule: DecisionRuleSpec,
    /// Maximum per-subtrial Go rate at the chosen threshold.
    pub achieved_error: f64,
    pub per_subtrial_error: Vec<f64>,
}

fn error_profile(stats: &[Vec<f64>], eta: f64) -> Vec<f64> {
    let k = stats[0].len();
    let n = stats.len() as f64;
    (0..k)
        .map(|i| stats.iter().filter(|row| row[i] > eta).count() as f64 / n)
        .collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Smallest common threshold η in [0, 1) whose maximum per-subtrial Go rate
/// over the cached replicate probabilities is at most `target`.
///
/// `probs` is indexed `[replicate][subtrial]`. For the separate rule the
/// search runs on the diagonal η₁ = η₂. The Go rate only changes at observed
/// probability values, so those (plus 0) are the only candidates.
pub fn calibrate_from_probabilities(
    probs: &[Vec<DecisionProbs>],
    template: &DecisionRuleSpec,
    target: f64,
) -> Result<Calibration> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::contract(format!("target error {target} outside (0, 1]")));
    }
    if probs.is_empty() || probs[0].is_empty() {
        return Err(Error::contract("calibration needs at least one replicate"));
    }
    let stats: Vec<Vec<f64>> = probs
        .iter()
        .map(|row| row.iter().map(|p| p.statistic(template.rule)).collect())
        .collect();
    let mut candidates: Vec<f64> = std::iter::once(0.0)
        .chain(stats.iter().flatten().copied().filter(|&v| v < 1.0))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let err_at = |eta: f64| max_of(&error_profile(&stats, eta));
    // Max error is non-increasing in η: binary search for the first success.
    let (mut lo, mut hi) = (0usize, candidates.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if err_at(candidates[mid]) <= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == candidates.len() {
        let step = (candidates.len() / 50).max(1);
        let mut frontier: Vec<(f64, f64)> = candidates
            .iter()
            .step_by(step)
            .chain(candidates.last())
            .map(|&eta| (eta, err_at(eta)))
            .collect();
        frontier.dedup_by(|a, b| a.0 == b.0);
        let best = frontier.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
        return Err(Error::CalibrationFailed {
            target,
            best,
            frontier,
        });
    }
    let eta = candidates[lo];
    let per = error_profile(&stats, eta);
    Ok(Calibration {
        rule: template.with_threshold(eta),
        achieved_error: max_of(&per),
        per_subtrial_error: per,
    })
}

/// Simulate `replicates` trials from `null_scenario`, fit `model` once per
/// trial and calibrate the threshold of `template` on the cached decision
/// probabilities. Replicates come from the calibration stream of `seed`, so
/// they are disjoint from an operating-characteristics run with the same seed.
pub fn calibrate_threshold(
    null_scenario: &Scenario,
    model: &ModelSpec,
    template: &DecisionRuleSpec,
    target_error: f64,
    replicates: usize,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<Calibration> {
    let probs = crate::oc::replicate_probabilities(
        null_scenario,
        model,
        template.delta,
        replicates,
        cfg,
        calibration_seed(seed),
    )?;
    calibrate_from_probabilities(&probs, template, target_error)
}

/// Seed of the calibration replicates derived from a run seed.
pub fn calibration_seed(seed: u64) -> u64 {
    crate::stats::rng::path_id(&[crate::stats::rng::tag::CALIBRATION, seed])
}
