//! Subcommand implementations. Each writes its tables under the output
//! directory and returns the paths written.

use crate::config::{ConfigError, RunConfig};
use crate::plot;
use bibasket::datagen::{generate_trial, TrialData};
use bibasket::decisions::{calibrate_threshold, decide, DecisionRuleSpec};
use bibasket::io::{read_trial_csv, write_arms_csv, write_draws_csv, write_efficacy_csv};
use bibasket::mcmc::{diagnostics, max_split_rhat, posterior_summary, run_posterior, McmcConfig, PosteriorDraws};
use bibasket::models::{marginal_exchangeability_weights, ModelSpec};
use bibasket::oc::{
    compare_models, report_rows, run_oc, write_go_matrix_csv, write_report_csv, write_timing_csv, Metric, OcModel,
    OcRow, ScenarioRun,
};
use bibasket::scenario::{builtin_scenarios, expected_arm_summaries, truth_labels, Scenario, TruthLabel};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Library(#[from] bibasket::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit code: 2 for configuration or input errors, 3 for
    /// numerical failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Library(e) if e.is_numeric() => 3,
            CliError::Library(bibasket::Error::Io(_) | bibasket::Error::Csv(_)) => 1,
            CliError::Library(_) => 2,
            CliError::Io { .. } => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish(mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush().map_err(|e| CliError::Library(e.into()))
}

fn lib<T>(r: std::result::Result<T, csv::Error>) -> Result<T> {
    r.map_err(|e| CliError::Library(e.into()))
}

/// The MCMC settings of a run, seeded from the run seed.
fn mcmc(cfg: &RunConfig) -> McmcConfig {
    McmcConfig { seed: cfg.seed(), ..cfg.mcmc.clone() }
}

// ---------------------------------------------------------------- fit

fn fit_data(cfg: &RunConfig, out: &Path) -> Result<TrialData> {
    if let Some(arms) = &cfg.fit.arms {
        let eff = cfg.fit.efficacy.as_deref().map(open).transpose()?;
        return Ok(read_trial_csv(open(arms)?, eff)?);
    }
    let name = cfg
        .fit
        .scenario
        .clone()
        .or_else(|| cfg.scenarios.first().cloned())
        .or_else(|| cfg.scenario.first().map(|s| s.name.clone()))
        .ok_or_else(|| ConfigError::Field {
            field: "fit".into(),
            message: "set fit.arms or a scenario to generate data from".into(),
        })?;
    let scenario = cfg.scenario_named(&name)?;
    let data = generate_trial(&scenario, cfg.seed(), cfg.fit.replicate.unwrap_or(0))?;
    write_arms_csv(&data, create(&out.join("arms.csv"))?)?;
    write_efficacy_csv(&data, create(&out.join("efficacy.csv"))?)?;
    Ok(data)
}

fn write_summary(draws: &PosteriorDraws, path: &Path) -> Result<()> {
    let diag = diagnostics(draws)?;
    let mut w = csv_writer(path)?;
    lib(w.write_record(["coordinate", "mean", "sd", "q2.5", "median", "q97.5", "ess", "rhat"]))?;
    for d in &diag {
        let s = posterior_summary(draws, &d.coord)?;
        lib(w.write_record([
            d.coord.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.lower.to_string(),
            s.median.to_string(),
            s.upper.to_string(),
            d.ess.to_string(),
            d.rhat.to_string(),
        ]))?;
    }
    finish(w)
}

fn write_weights(draws: &PosteriorDraws, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    lib(w.write_record(["subtrial", "tox_exchangeable", "eff_exchangeable"]))?;
    for (k, (t, e)) in marginal_exchangeability_weights(draws)?.into_iter().enumerate() {
        lib(w.write_record([(k + 1).to_string(), t.to_string(), e.to_string()]))?;
    }
    finish(w)
}

fn write_decisions(draws: &PosteriorDraws, rule: &DecisionRuleSpec, path: &Path) -> Result<()> {
    let outcome = decide(draws, rule)?;
    let mut w = csv_writer(path)?;
    lib(w.write_record([
        "subtrial", "rule", "eta1", "eta2", "eta", "delta", "prob_tox", "prob_eff", "prob_joint", "go",
    ]))?;
    for (k, d) in outcome.subtrials.iter().enumerate() {
        lib(w.write_record([
            (k + 1).to_string(),
            rule.rule.to_string(),
            rule.eta1.to_string(),
            rule.eta2.to_string(),
            rule.eta.to_string(),
            rule.delta.to_string(),
            d.probs.prob_tox.to_string(),
            d.probs.prob_eff.to_string(),
            d.probs.prob_joint.to_string(),
            d.go.to_string(),
        ]))?;
    }
    finish(w)
}

fn write_diagnostics(draws: &PosteriorDraws, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    lib(w.write_record(["chain", "block", "acceptance"]))?;
    for ch in &draws.chains {
        for (name, a) in draws.block_names.iter().zip(&ch.acceptance) {
            if a.is_finite() {
                lib(w.write_record([(ch.chain + 1).to_string(), name.clone(), a.to_string()]))?;
            }
        }
    }
    lib(w.write_record(["all".to_string(), "max_split_rhat".into(), max_split_rhat(draws).to_string()]))?;
    finish(w)
}

/// Fit every configured model to one dataset. Outputs go to one
/// subdirectory per model.
pub fn fit(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let data = fit_data(cfg, out)?;
    let k = data.n_subtrials();
    let models = cfg.models(k)?;
    let mcmc = mcmc(cfg);
    let mut written = Vec::new();
    for (i, spec) in models.iter().enumerate() {
        let draws = run_posterior(&data, spec, &mcmc)?;
        let dir = out.join(plot::slug(&spec.name));
        let (rule, fixed) = cfg.rule_for((!cfg.model.is_empty()).then_some(i));
        let rule = if fixed { rule } else { DecisionRuleSpec { rule: rule.rule, delta: rule.delta, ..Default::default() } };
        write_summary(&draws, &dir.join("summary.csv"))?;
        write_weights(&draws, &dir.join("weights.csv"))?;
        write_decisions(&draws, &rule, &dir.join("decisions.csv"))?;
        write_diagnostics(&draws, &dir.join("diagnostics.csv"))?;
        if cfg.fit.dump_draws.unwrap_or(false) {
            write_draws_csv(&draws, create(&dir.join("draws.csv"))?)?;
        }
        eprintln!("fit {}: max split R-hat {:.3}", spec.name, max_split_rhat(&draws));
        written.push(dir);
    }
    Ok(written)
}

// ---------------------------------------------------------- calibration

pub struct Threshold {
    pub model: String,
    pub rule: DecisionRuleSpec,
    pub calibrated: bool,
    pub per_subtrial_error: Vec<f64>,
}

/// Decision rules for `models`: fixed thresholds from the config, otherwise
/// calibrated on the calibration scenario.
fn thresholds(cfg: &RunConfig, models: &[ModelSpec], null: &Scenario) -> Result<Vec<Threshold>> {
    let mcmc = mcmc(cfg);
    let reps = cfg.decision.calibration_reps.unwrap_or(cfg.n_reps());
    models
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let (template, fixed) = cfg.rule_for((!cfg.model.is_empty()).then_some(i));
            if fixed {
                return Ok(Threshold { model: spec.name.clone(), rule: template, calibrated: false, per_subtrial_error: vec![] });
            }
            if spec.n_subtrials() != null.n_subtrials() {
                return Err(ConfigError::Field {
                    field: "decision.calibration_scenario".into(),
                    message: format!(
                        "'{}' has {} subtrials but the study has {}; set thresholds explicitly",
                        null.name,
                        null.n_subtrials(),
                        spec.n_subtrials()
                    ),
                }
                .into());
            }
            let cal = calibrate_threshold(null, spec, &template, cfg.decision.target_error, reps, &mcmc, cfg.seed())?;
            eprintln!(
                "calibrated {}: eta = {:.4}, max Global-Null error {:.3}",
                spec.name, cal.rule.eta, cal.achieved_error
            );
            Ok(Threshold { model: spec.name.clone(), rule: cal.rule, calibrated: true, per_subtrial_error: cal.per_subtrial_error })
        })
        .collect()
}

fn write_thresholds(ts: &[Threshold], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    lib(w.write_record(["model", "rule", "eta1", "eta2", "eta", "delta", "source", "max_null_error"]))?;
    for t in ts {
        let max = t.per_subtrial_error.iter().copied().fold(f64::NAN, f64::max);
        lib(w.write_record([
            t.model.clone(),
            t.rule.rule.to_string(),
            t.rule.eta1.to_string(),
            t.rule.eta2.to_string(),
            t.rule.eta.to_string(),
            t.rule.delta.to_string(),
            if t.calibrated { "calibrated" } else { "config" }.to_string(),
            if t.calibrated { max.to_string() } else { String::new() },
        ]))?;
    }
    finish(w)
}

/// Calibrate every configured model and write the thresholds with their
/// per-subtrial null error rates.
pub fn calibrate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let null = cfg.scenario_named(&cfg.decision.calibration_scenario)?;
    let models = cfg.models(null.n_subtrials())?;
    let ts = thresholds(cfg, &models, &null)?;
    let main = out.join("thresholds.csv");
    write_thresholds(&ts, &main)?;
    let errors = out.join("calibration_errors.csv");
    let mut w = csv_writer(&errors)?;
    lib(w.write_record(["model", "subtrial", "error"]))?;
    for t in &ts {
        for (k, e) in t.per_subtrial_error.iter().enumerate() {
            lib(w.write_record([t.model.clone(), (k + 1).to_string(), e.to_string()]))?;
        }
    }
    finish(w)?;
    Ok(vec![main, errors])
}

// ------------------------------------------------------------------- oc

fn write_comparisons(runs: &[ScenarioRun], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    lib(w.write_record([
        "scenario", "metric", "subtrial", "model_a", "model_b", "estimate_a", "estimate_b", "diff", "pooled_se",
        "verdict",
    ]))?;
    for run in runs {
        for p in compare_models(run).pairs {
            lib(w.write_record([
                run.scenario.clone(),
                p.metric.to_string(),
                p.subtrial.map_or("mean".to_string(), |k| (k + 1).to_string()),
                p.model_a,
                p.model_b,
                p.estimate_a.to_string(),
                p.estimate_b.to_string(),
                p.diff.to_string(),
                p.pooled_se.to_string(),
                format!("{:?}", p.verdict),
            ]))?;
        }
    }
    finish(w)
}

fn write_plots(rows: &[OcRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut scenarios: Vec<&str> = Vec::new();
    for r in rows {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
    }
    for s in scenarios {
        for metric in [Metric::Type1Error, Metric::Power, Metric::Oer] {
            let sel: Vec<&OcRow> = rows.iter().filter(|r| r.scenario == s && r.metric == metric).collect();
            if sel.is_empty() {
                continue;
            }
            let path = dir.join(format!("{}_{}.svg", plot::slug(s), metric));
            fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
            fs::write(&path, plot::bar_chart(s, metric, &sel)).map_err(|source| CliError::Io { path: path.clone(), source })?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Operating characteristics of every configured model in every scenario.
pub fn oc(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let scenarios = cfg.resolve_scenarios()?;
    if scenarios.is_empty() {
        return Err(ConfigError::Field { field: "scenarios".into(), message: "oc mode needs at least one scenario".into() }.into());
    }
    let null = cfg.scenario_named(&cfg.decision.calibration_scenario)?;
    let mcmc = mcmc(cfg);
    let mut runs = Vec::new();
    let mut all_thresholds: Vec<(usize, Vec<Threshold>)> = Vec::new();
    for s in &scenarios {
        let k = s.n_subtrials();
        let models = cfg.models(k)?;
        if !all_thresholds.iter().any(|(kk, _)| *kk == k) {
            all_thresholds.push((k, thresholds(cfg, &models, &null)?));
        }
        let ts = &all_thresholds.iter().find(|(kk, _)| *kk == k).unwrap().1;
        let oc_models: Vec<OcModel> =
            models.into_iter().zip(ts).map(|(spec, t)| OcModel { spec, rule: t.rule }).collect();
        let run = run_oc(s, &oc_models, &mcmc, cfg.n_reps(), cfg.seed(), cfg.delta_truth())?;
        eprintln!("oc {}: {} replicates × {} models", s.name, run.n_reps, run.models.len());
        runs.push(run);
    }
    let rows: Vec<OcRow> = runs.iter().flat_map(report_rows).collect();
    let mut written = vec![out.join("oc_report.csv"), out.join("timing.csv"), out.join("comparisons.csv"), out.join("thresholds.csv")];
    write_report_csv(&rows, create(&written[0])?)?;
    write_timing_csv(&runs, create(&written[1])?)?;
    write_comparisons(&runs, &written[2])?;
    let ts: Vec<Threshold> = all_thresholds.into_iter().flat_map(|(_, t)| t).collect();
    write_thresholds(&ts, &written[3])?;
    if cfg.go_matrix.unwrap_or(false) {
        let path = out.join("go_matrix.csv");
        write_go_matrix_csv(&runs, create(&path)?)?;
        written.push(path);
    }
    if cfg.emit_plots() {
        written.extend(write_plots(&rows, &out.join("plots"))?);
    }
    Ok(written)
}

// ------------------------------------------------------------ scenarios

/// Effects, arm sizes, implied arm quantities and truth labels of the
/// configured scenarios (all built-ins when none are configured).
pub fn scenarios(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut list = cfg.resolve_scenarios()?;
    if list.is_empty() {
        list = builtin_scenarios();
    }
    let path = out.join("scenarios.csv");
    let mut w = csv_writer(&path)?;
    lib(w.write_record([
        "scenario", "subtrial", "n", "theta_t", "theta_e", "p_control", "p_treatment", "mu_control", "mu_treatment",
        "truth",
    ]))?;
    for s in &list {
        let sums = expected_arm_summaries(s)?;
        let truth = truth_labels(s, cfg.delta_truth());
        for (k, a) in sums.iter().enumerate() {
            lib(w.write_record([
                s.name.clone(),
                (k + 1).to_string(),
                s.arm_sizes[k].to_string(),
                s.theta_t[k].to_string(),
                s.theta_e[k].to_string(),
                a.p_control.to_string(),
                a.p_treatment.to_string(),
                a.mu_control.to_string(),
                a.mu_treatment.to_string(),
                match truth[k] {
                    TruthLabel::Desirable => "desirable",
                    TruthLabel::Null => "null",
                }
                .to_string(),
            ]))?;
        }
    }
    finish(w)?;
    Ok(vec![path])
}
