//! Replicated simulation of Bayesian operating characteristics.
//!
//! Each (replicate, model) pair is an independent task: the replicate's data
//! comes from the data streams of the run seed (shared by every model, so the
//! models see identical trials), and the fit uses a task seed derived from
//! (seed, replicate, model name). Results are collected in task order, so the
//! report does not depend on the number of worker threads.

use crate::datagen::generate_trial;
use crate::decisions::{decision_probabilities, DecisionProbs, DecisionRuleSpec};
use crate::error::{Error, Result};
use crate::mcmc::{max_split_rhat, run_posterior, McmcConfig};
use crate::models::ModelSpec;
use crate::scenario::{truth_labels, Scenario, TruthLabel};
use crate::stats::rng::{path_id, tag};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::io::Write;
use std::time::Instant;

/// Replicates whose largest split R-hat exceeds this are flagged.
pub const RHAT_FLAG: f64 = 1.1;

/// A model together with the decision rule applied to its posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct OcModel {
    pub spec: ModelSpec,
    pub rule: DecisionRuleSpec,
}

/// Per-replicate outputs of one model in one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelResult {
    pub model: String,
    pub rule: DecisionRuleSpec,
    /// `[replicate][subtrial]`.
    pub probs: Vec<Vec<DecisionProbs>>,
    /// `[replicate][subtrial]`.
    pub go: Vec<Vec<bool>>,
    pub rhat_max: Vec<f64>,
    /// Wall time of each replicate's fit.
    pub seconds: Vec<f64>,
}

impl ModelResult {
    pub fn n_flagged(&self) -> usize {
        self.rhat_max.iter().filter(|&&r| !(r <= RHAT_FLAG)).count()
    }

    pub fn mean_rhat_max(&self) -> f64 {
        self.rhat_max.iter().sum::<f64>() / self.rhat_max.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRun {
    pub scenario: String,
    pub truth: Vec<TruthLabel>,
    pub n_reps: usize,
    pub models: Vec<ModelResult>,
}

impl ScenarioRun {
    pub fn model(&self, name: &str) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.model == name)
    }
}

/// Stable 64-bit key of a model label (FNV-1a).
fn model_key(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// MCMC seed of the fit of `model` to replicate `replicate`.
pub fn task_seed(seed: u64, replicate: u64, model: &str) -> u64 {
    path_id(&[tag::TASK, seed, replicate, model_key(model)])
}

struct TaskOutput {
    probs: Vec<DecisionProbs>,
    rhat_max: f64,
    seconds: f64,
}

fn fit_replicate(
    scenario: &Scenario,
    spec: &ModelSpec,
    delta: f64,
    replicate: usize,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<TaskOutput> {
    let start = Instant::now();
    let wrap = |e: Error| Error::Replicate {
        replicate,
        model: spec.name.clone(),
        source: Box::new(e),
    };
    let data = generate_trial(scenario, seed, replicate as u64).map_err(wrap)?;
    let task_cfg = McmcConfig {
        seed: task_seed(seed, replicate as u64, &spec.name),
        ..cfg.clone()
    };
    let draws = run_posterior(&data, spec, &task_cfg).map_err(wrap)?;
    let probs = decision_probabilities(&draws, delta).map_err(wrap)?;
    let rhat_max = if task_cfg.chains > 1 { max_split_rhat(&draws) } else { f64::NAN };
    Ok(TaskOutput {
        probs,
        rhat_max,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Decision probabilities of `model` on `replicates` simulated trials.
pub fn replicate_probabilities(
    scenario: &Scenario,
    model: &ModelSpec,
    delta: f64,
    replicates: usize,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<Vec<Vec<DecisionProbs>>> {
    check_shapes(scenario, std::slice::from_ref(model))?;
    (0..replicates)
        .into_par_iter()
        .map(|r| fit_replicate(scenario, model, delta, r, cfg, seed).map(|t| t.probs))
        .collect()
}

fn check_shapes<'a>(scenario: &Scenario, specs: impl IntoIterator<Item = &'a ModelSpec>) -> Result<()> {
    scenario.validate()?;
    for spec in specs {
        spec.validate()?;
        if spec.n_subtrials() != scenario.n_subtrials() {
            return Err(Error::contract(format!(
                "model {} has {} subtrials but scenario '{}' has {}",
                spec.name,
                spec.n_subtrials(),
                scenario.name,
                scenario.n_subtrials()
            )));
        }
    }
    Ok(())
}

/// Simulate `n_reps` trials, fit every model to each and record Go decisions.
///
/// Truth labels use `delta_truth` as the efficacy margin.
pub fn run_oc(
    scenario: &Scenario,
    models: &[OcModel],
    cfg: &McmcConfig,
    n_reps: usize,
    seed: u64,
    delta_truth: f64,
) -> Result<ScenarioRun> {
    if n_reps == 0 {
        return Err(Error::contract("n_reps must be at least 1"));
    }
    cfg.validate()?;
    check_shapes(scenario, models.iter().map(|m| &m.spec))?;
    for m in models {
        m.rule.validate()?;
    }
    let n_models = models.len();
    let outputs: Vec<TaskOutput> = (0..n_reps * n_models)
        .into_par_iter()
        .map(|task| {
            let (r, m) = (task / n_models, task % n_models);
            let model = &models[m];
            fit_replicate(scenario, &model.spec, model.rule.delta, r, cfg, seed)
        })
        .collect::<Result<_>>()?;
    let mut results: Vec<ModelResult> = models
        .iter()
        .map(|m| ModelResult {
            model: m.spec.name.clone(),
            rule: m.rule,
            probs: Vec::with_capacity(n_reps),
            go: Vec::with_capacity(n_reps),
            rhat_max: Vec::with_capacity(n_reps),
            seconds: Vec::with_capacity(n_reps),
        })
        .collect();
    for (task, out) in outputs.into_iter().enumerate() {
        let res = &mut results[task % n_models];
        res.go.push(out.probs.iter().map(|p| res.rule.go(p)).collect());
        res.probs.push(out.probs);
        res.rhat_max.push(out.rhat_max);
        res.seconds.push(out.seconds);
    }
    Ok(ScenarioRun {
        scenario: scenario.name.clone(),
        truth: truth_labels(scenario, delta_truth),
        n_reps,
        models: results,
    })
}

/// Fraction of replicates with at least one Go on a null subtrial; `None`
/// when no subtrial is null.
pub fn overall_error_rate(go: &[Vec<bool>], truth: &[TruthLabel]) -> Option<f64> {
    if go.is_empty() || !truth.contains(&TruthLabel::Null) {
        return None;
    }
    let hits = go
        .iter()
        .filter(|row| row.iter().zip(truth).any(|(&g, &t)| g && t == TruthLabel::Null))
        .count();
    Some(hits as f64 / go.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Type1Error,
    Power,
    Oer,
}

impl Metric {
    /// Subtrials a per-subtrial metric is reported for.
    pub fn applies_to(self, label: TruthLabel) -> bool {
        match self {
            Metric::Type1Error | Metric::Oer => label == TruthLabel::Null,
            Metric::Power => label == TruthLabel::Desirable,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Type1Error => "type1_error",
            Metric::Power => "power",
            Metric::Oer => "oer",
        })
    }
}

/// Binomial Monte Carlo standard error.
pub fn mc_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OcRow {
    pub scenario: String,
    pub model: String,
    pub rule: String,
    pub eta1: f64,
    pub eta2: f64,
    pub eta: f64,
    pub delta: f64,
    /// 1-based subtrial, or "all" for the overall error rate.
    pub subtrial: String,
    pub metric: Metric,
    pub estimate: f64,
    pub mc_se: f64,
    pub n_reps: usize,
    pub mean_rhat_max: f64,
    pub n_flagged: usize,
}

/// Type I error rows for null subtrials, power rows for desirable ones and
/// one overall-error-rate row per model when any subtrial is null.
pub fn report_rows(run: &ScenarioRun) -> Vec<OcRow> {
    let mut rows = Vec::new();
    for m in &run.models {
        let row = |subtrial: String, metric: Metric, estimate: f64| OcRow {
            scenario: run.scenario.clone(),
            model: m.model.clone(),
            rule: m.rule.rule.to_string(),
            eta1: m.rule.eta1,
            eta2: m.rule.eta2,
            eta: m.rule.eta,
            delta: m.rule.delta,
            subtrial,
            metric,
            estimate,
            mc_se: mc_se(estimate, run.n_reps),
            n_reps: run.n_reps,
            mean_rhat_max: m.mean_rhat_max(),
            n_flagged: m.n_flagged(),
        };
        for (k, &label) in run.truth.iter().enumerate() {
            let metric = match label {
                TruthLabel::Null => Metric::Type1Error,
                TruthLabel::Desirable => Metric::Power,
            };
            let est = m.go.iter().filter(|g| g[k]).count() as f64 / run.n_reps as f64;
            rows.push(row((k + 1).to_string(), metric, est));
        }
        if let Some(oer) = overall_error_rate(&m.go, &run.truth) {
            rows.push(row("all".into(), Metric::Oer, oer));
        }
    }
    rows
}

pub fn write_report_csv<W: Write>(rows: &[OcRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "scenario", "model", "rule", "eta1", "eta2", "eta", "delta", "subtrial", "metric",
            "estimate", "mc_se", "n_reps", "mean_rhat_max", "n_flagged",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Wall time per (scenario, model, replicate).
pub fn write_timing_csv<W: Write>(runs: &[ScenarioRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "model", "replicate", "seconds"])?;
    for run in runs {
        for m in &run.models {
            for (r, s) in m.seconds.iter().enumerate() {
                w.write_record([&run.scenario, &m.model, &r.to_string(), &format!("{s:.6}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Raw Go indicators per (scenario, model, replicate, subtrial).
pub fn write_go_matrix_csv<W: Write>(runs: &[ScenarioRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "model", "replicate", "subtrial", "go"])?;
    for run in runs {
        for m in &run.models {
            for (r, row) in m.go.iter().enumerate() {
                for (k, &g) in row.iter().enumerate() {
                    w.write_record([
                        run.scenario.as_str(),
                        m.model.as_str(),
                        &r.to_string(),
                        &(k + 1).to_string(),
                        if g { "1" } else { "0" },
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Estimate and Monte Carlo SE of `metric` for one model. `subtrial = None`
/// averages over every subtrial the metric applies to; `Metric::Oer`
/// ignores `subtrial`. `None` when no subtrial qualifies.
pub fn metric_estimate(
    result: &ModelResult,
    truth: &[TruthLabel],
    metric: Metric,
    subtrial: Option<usize>,
) -> Option<(f64, f64)> {
    let n = result.go.len();
    if n == 0 {
        return None;
    }
    if metric == Metric::Oer {
        let p = overall_error_rate(&result.go, truth)?;
        return Some((p, mc_se(p, n)));
    }
    let cols: Vec<usize> = match subtrial {
        Some(k) => {
            if !metric.applies_to(truth[k]) {
                return None;
            }
            vec![k]
        }
        None => (0..truth.len()).filter(|&k| metric.applies_to(truth[k])).collect(),
    };
    if cols.is_empty() {
        return None;
    }
    let per_rep: Vec<f64> = result
        .go
        .iter()
        .map(|row| cols.iter().filter(|&&k| row[k]).count() as f64 / cols.len() as f64)
        .collect();
    let mean = per_rep.iter().sum::<f64>() / n as f64;
    let se = if cols.len() == 1 {
        mc_se(mean, n)
    } else {
        let var = per_rep.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        (var / n as f64).sqrt()
    };
    Some((mean, se))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    AHigher,
    BHigher,
    Tie,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairwiseComparison {
    pub metric: Metric,
    /// 0-based subtrial, or `None` for the average over qualifying subtrials.
    pub subtrial: Option<usize>,
    pub model_a: String,
    pub model_b: String,
    pub estimate_a: f64,
    pub estimate_b: f64,
    /// `estimate_a − estimate_b`.
    pub diff: f64,
    /// sqrt(se_a² + se_b²).
    pub pooled_se: f64,
    pub verdict: Verdict,
}

impl PairwiseComparison {
    /// A is not below B beyond two pooled standard errors.
    pub fn a_at_least_b(&self) -> bool {
        self.diff >= -2.0 * self.pooled_se
    }
}

/// Compare two models on one metric; differences within two pooled SEs are ties.
pub fn compare_pair(
    run: &ScenarioRun,
    metric: Metric,
    subtrial: Option<usize>,
    a: &str,
    b: &str,
) -> Option<PairwiseComparison> {
    let (ea, sa) = metric_estimate(run.model(a)?, &run.truth, metric, subtrial)?;
    let (eb, sb) = metric_estimate(run.model(b)?, &run.truth, metric, subtrial)?;
    let diff = ea - eb;
    let pooled_se = (sa * sa + sb * sb).sqrt();
    let verdict = if diff.abs() <= 2.0 * pooled_se {
        Verdict::Tie
    } else if diff > 0.0 {
        Verdict::AHigher
    } else {
        Verdict::BHigher
    };
    Some(PairwiseComparison {
        metric,
        subtrial,
        model_a: a.to_string(),
        model_b: b.to_string(),
        estimate_a: ea,
        estimate_b: eb,
        diff,
        pooled_se,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelRanking {
    pub metric: Metric,
    pub subtrial: Option<usize>,
    /// (model, estimate) from highest to lowest; ties keep input order.
    pub ranked: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub scenario: String,
    pub rankings: Vec<ModelRanking>,
    pub pairs: Vec<PairwiseComparison>,
}

/// Rankings and all pairwise comparisons for every metric, per subtrial and
/// averaged.
pub fn compare_models(run: &ScenarioRun) -> ComparisonSummary {
    let mut rankings = Vec::new();
    let mut pairs = Vec::new();
    let names: Vec<&str> = run.models.iter().map(|m| m.model.as_str()).collect();
    let mut targets: Vec<(Metric, Option<usize>)> = Vec::new();
    for metric in [Metric::Type1Error, Metric::Power] {
        targets.push((metric, None));
        targets.extend((0..run.truth.len()).map(|k| (metric, Some(k))));
    }
    targets.push((Metric::Oer, None));
    for (metric, subtrial) in targets {
        let mut ranked: Vec<(String, f64)> = run
            .models
            .iter()
            .filter_map(|m| metric_estimate(m, &run.truth, metric, subtrial).map(|e| (m.model.clone(), e.0)))
            .collect();
        if ranked.is_empty() {
            continue;
        }
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        rankings.push(ModelRanking {
            metric,
            subtrial,
            ranked,
        });
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                pairs.extend(compare_pair(run, metric, subtrial, a, b));
            }
        }
    }
    ComparisonSummary {
        scenario: run.scenario.clone(),
        rankings,
        pairs,
    }
}
