mod common;

use bibasket::datagen::{ArmData, TrialData};
use bibasket::mcmc::{posterior_summary, run_chain, run_posterior, McmcConfig};
use bibasket::models::{indicator_full_conditional, marginal_exchangeability_weights, Component, ModelSpec, PriorSpec};
use bibasket::scenario::find_builtin;
use common::*;

#[test]
fn toxicity_only_matches_grid_quadrature() {
    let data = single_subtrial(ArmData::new(10, 3, vec![]).unwrap(), ArmData::new(10, 1, vec![]).unwrap());
    let spec = ModelSpec::sa(PriorSpec::defaults(1));
    let draws = run_posterior(&data, &spec, &McmcConfig::default()).unwrap();
    let s = posterior_summary(&draws, "theta_t[1]").unwrap();
    let ess = ess(&draws, "theta_t[1]");
    let se_mean = s.sd / ess.sqrt();
    let se_median = (std::f64::consts::PI / 2.0).sqrt() * se_mean;
    let (mean, median) = tox_grid_oracle(3.0, 1.0, 10.0);
    assert!((s.mean - mean).abs() < 3.0 * se_mean, "mean {} vs {mean} (se {se_mean})", s.mean);
    assert!((s.median - median).abs() < 3.0 * se_median, "median {} vs {median} (se {se_median})", s.median);
}

#[test]
fn grid_oracle_is_resolution_stable() {
    // The grid is wide enough that the tails do not move the answer.
    let (mean, median) = tox_grid_oracle(3.0, 1.0, 10.0);
    assert!(mean < median && median < 0.0);
    assert!((-2.0..-0.8).contains(&mean), "{mean}");
}

#[test]
fn efficacy_matches_conjugate_normal_posterior() {
    let zc = vec![0.5, 1.2, -0.3, 0.8, 1.1, 0.2];
    let ze = vec![1.9, 2.4, 1.1, 2.0, 1.6];
    let data = single_subtrial(ArmData::new(0, 0, zc.clone()).unwrap(), ArmData::new(0, 0, ze.clone()).unwrap());
    let spec = ModelSpec::sa(PriorSpec::defaults(1));
    let sigma = 0.8;
    let cfg = McmcConfig { fix_sigma: Some(sigma), ..McmcConfig::default() };
    let draws = run_posterior(&data, &spec, &cfg).unwrap();

    let (mean_theta, sd_theta) = conjugate_effect_posterior(&zc, &ze, sigma, 10.0, 5.0);

    let s = posterior_summary(&draws, "theta_e[1]").unwrap();
    let se_mean = sd_theta / ess(&draws, "theta_e[1]").sqrt();
    assert!((s.mean - mean_theta).abs() < 3.0 * se_mean, "mean {} vs {mean_theta}", s.mean);
    // SE of a sample SD is about sd/√(2·ESS).
    let se_sd = sd_theta / (2.0 * ess(&draws, "theta_e[1]")).sqrt();
    assert!((s.sd - sd_theta).abs() < 3.0 * se_sd, "sd {} vs {sd_theta}", s.sd);
    assert!(draws.column(draws.coord_index("sigma_e[1]").unwrap()).iter().all(|&v| v == sigma));
}

#[test]
fn empty_data_recovers_prior_mixture() {
    let k = 3;
    let spec = ModelSpec::biexnex(&[0.3, 0.5, 0.8], PriorSpec::defaults(k));
    let draws = run_posterior(&TrialData::empty(k), &spec, &McmcConfig::default()).unwrap();
    for (i, omega) in [0.3, 0.5, 0.8].into_iter().enumerate() {
        let z = draws.indicator_column(i);
        let ex = z.iter().filter(|&&c| c == Component::Both).count() as f64 / z.len() as f64;
        assert!((ex - omega).abs() < 0.02, "subtrial {}: Pr(EX) = {ex}, expected {omega}", i + 1);
        let name = format!("theta_t[{}]", i + 1);
        let s = posterior_summary(&draws, &name).unwrap();
        let se = s.sd / ess(&draws, &name).sqrt();
        assert!(s.mean.abs() < 3.0 * se, "{name} mean {} (se {se})", s.mean);
    }
}

#[test]
fn toy_gaussian_target_moments() {
    // With no data the SA control/effect pair is N(0, 10²) × N(0, 5²).
    let spec = ModelSpec::sa(PriorSpec::defaults(1));
    let cfg = McmcConfig { iterations: 20_000, ..McmcConfig::default() };
    let draws = run_posterior(&TrialData::empty(1), &spec, &cfg).unwrap();
    let a = draws.column(draws.coord_index("alpha_t[1]").unwrap());
    let t = draws.column(draws.coord_index("theta_t[1]").unwrap());
    for (name, x, sd) in [("alpha_t[1]", &a, 10.0), ("theta_t[1]", &t, 5.0)] {
        let n_eff = ess(&draws, name);
        let (m, s) = mean_sd(x);
        assert!(m.abs() < 3.0 * sd / n_eff.sqrt(), "{name} mean {m}");
        assert!((s - sd).abs() < 3.0 * sd / (2.0 * n_eff).sqrt(), "{name} sd {s}");
    }
    let (ma, mt) = (mean_sd(&a).0, mean_sd(&t).0);
    let cov = a.iter().zip(&t).map(|(x, y)| (x - ma) * (y - mt)).sum::<f64>() / a.len() as f64;
    let corr = cov / (mean_sd(&a).1 * mean_sd(&t).1);
    let n_eff = ess(&draws, "alpha_t[1]").min(ess(&draws, "theta_t[1]"));
    assert!(corr.abs() < 3.0 / n_eff.sqrt(), "corr {corr}");
}

#[test]
fn indicator_frequencies_match_full_conditional_by_theta_bin() {
    let s = find_builtin("Ib").unwrap();
    let data = bibasket::datagen::generate_trial(&s, 11, 0).unwrap();
    let spec = ModelSpec::reference(bibasket::models::ModelKind::EBiExnex, 6);
    let cfg = McmcConfig { chains: 2, iterations: 20_000, ..McmcConfig::default() };
    let draws = run_posterior(&data, &spec, &cfg).unwrap();
    let k = 5;
    let per_chain = draws.chains[0].n_draws(draws.n_coords());
    let theta: Vec<f64> = draws.chain_column(0, draws.coord_index("theta_t[6]").unwrap());
    let cuts = {
        let s = sorted(theta.clone());
        [s[s.len() / 3], s[2 * s.len() / 3]]
    };
    for bin in 0..3 {
        for comp in Component::ALL {
            let mut diff = Vec::with_capacity(per_chain * draws.n_chains());
            for ch in 0..draws.n_chains() {
                for d in 0..per_chain {
                    let st = draws.state(ch, d).unwrap();
                    let t = st.theta_t[k];
                    let b = usize::from(t >= cuts[0]) + usize::from(t >= cuts[1]);
                    if b != bin {
                        diff.push(0.0);
                        continue;
                    }
                    let p = indicator_full_conditional(&st, &spec, k)[comp.index()];
                    diff.push(f64::from(u8::from(st.z[k] == comp)) - p);
                }
            }
            let (m, _) = mean_sd(&diff);
            let se = batch_means_se(&diff, 50);
            assert!(m.abs() < 3.5 * se + 1e-3, "bin {bin} {comp:?}: {m} (se {se})");
        }
    }
}

#[test]
fn adaptation_stops_after_burn_in() {
    let data = bibasket::datagen::generate_trial(&find_builtin("Ia").unwrap(), 2, 0).unwrap();
    let spec = ModelSpec::reference(bibasket::models::ModelKind::EBiExnex, 6);
    let cfg = McmcConfig { chains: 1, burn_in: 500, iterations: 1000, ..McmcConfig::default() };
    let chain = run_chain(&data, &spec, &cfg, 0).unwrap();
    assert!(!chain.scale_history.is_empty());
    assert!(chain.scale_history.iter().all(|r| r.iteration <= cfg.burn_in));
}

#[test]
fn same_seed_gives_identical_draws() {
    let data = bibasket::datagen::generate_trial(&find_builtin("IIa").unwrap(), 5, 3).unwrap();
    let spec = ModelSpec::reference(bibasket::models::ModelKind::BiExnex, 6);
    let cfg = McmcConfig { chains: 3, burn_in: 200, iterations: 500, ..McmcConfig::default() };
    let a = run_posterior(&data, &spec, &cfg).unwrap();
    let b = run_posterior(&data, &spec, &cfg).unwrap();
    assert_eq!(a, b);
    let other = run_posterior(&data, &spec, &McmcConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.chains[0].values, other.chains[0].values);
}

#[test]
fn single_chain_run_equals_run_chain() {
    let data = bibasket::datagen::generate_trial(&find_builtin("Ia").unwrap(), 5, 1).unwrap();
    let spec = ModelSpec::reference(bibasket::models::ModelKind::IndExnex, 6);
    let cfg = McmcConfig { chains: 1, burn_in: 200, iterations: 300, ..McmcConfig::default() };
    let draws = run_posterior(&data, &spec, &cfg).unwrap();
    let single = run_chain(&data, &spec, &cfg, 0).unwrap();
    let chain = &draws.chains[0];
    assert_eq!(chain.values, single.values);
    assert_eq!(chain.indicators, single.indicators);
    assert_eq!(chain.scale_history, single.scale_history);
    // Blocks never proposed report NaN, so compare bit patterns.
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&chain.acceptance), bits(&single.acceptance));
}

#[test]
fn retained_count_matches_config() {
    let spec = ModelSpec::reference(bibasket::models::ModelKind::Bhm, 2);
    let cfg = McmcConfig { chains: 2, burn_in: 10, iterations: 301, thin: 3, ..McmcConfig::default() };
    let draws = run_posterior(&TrialData::empty(2), &spec, &cfg).unwrap();
    assert_eq!(draws.n_draws(), 2 * 100);
    for ch in 0..2 {
        for d in 0..100 {
            draws.state(ch, d).unwrap().validate(&spec).unwrap();
        }
    }
}

#[test]
fn pure_models_have_degenerate_exchangeability_weights() {
    let data = bibasket::datagen::generate_trial(&find_builtin("Ia").unwrap(), 9, 0).unwrap();
    let cfg = McmcConfig { chains: 1, burn_in: 200, iterations: 300, ..McmcConfig::default() };
    let bhm = run_posterior(&data, &ModelSpec::bhm(PriorSpec::defaults(6)), &cfg).unwrap();
    assert!(marginal_exchangeability_weights(&bhm).unwrap().iter().all(|&w| w == (1.0, 1.0)));
    let sa = run_posterior(&data, &ModelSpec::sa(PriorSpec::defaults(6)), &cfg).unwrap();
    assert!(marginal_exchangeability_weights(&sa).unwrap().iter().all(|&w| w == (0.0, 0.0)));
}

#[test]
fn initialisation_failure_is_reported() {
    // A state whose likelihood cannot be evaluated: enormous efficacy values
    // overflow the squared residuals.
    let data = single_subtrial(
        ArmData::new(1, 0, vec![1e300]).unwrap(),
        ArmData::new(1, 0, vec![-1e300]).unwrap(),
    );
    let spec = ModelSpec::sa(PriorSpec::defaults(1));
    let err = run_posterior(&data, &spec, &McmcConfig::fast()).unwrap_err();
    assert!(matches!(err, bibasket::Error::Initialisation { .. }), "{err}");
}
