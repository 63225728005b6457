mod common;

use bibasket::datagen::{generate_trial, ArmData, SubtrialData, TrialData};
use bibasket::decisions::{calibrate_from_probabilities, decide, decision_probabilities, DecisionProbs, DecisionRuleSpec};
use bibasket::io::{read_trial_csv, write_arms_csv, write_efficacy_csv};
use bibasket::models::{log_posterior, Component, ModelSpec, PriorSpec};
use bibasket::oc::overall_error_rate;
use bibasket::scenario::{builtin_scenarios, TruthLabel};
use bibasket::stats::{inv_logit, logit, normal_cdf, normal_quantile, RngStream};
use common::*;
use proptest::prelude::*;

fn with_z(mut s: bibasket::models::ParamState, z: Component) -> bibasket::models::ParamState {
    s.z = vec![z; s.z.len()];
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn degeneracy_chain_holds_pointwise(seed in any::<u64>(), scen in 0usize..21, omega in 0.01f64..0.99) {
        let scenarios = builtin_scenarios();
        let s = &scenarios[scen];
        let k = s.n_subtrials();
        let data = generate_trial(s, seed, 0).unwrap();
        let prior = PriorSpec::defaults(k);
        let mut rng = RngStream::new(seed, 99);
        let base = random_state(&ModelSpec::reference(bibasket::models::ModelKind::EBiExnex, k), &mut rng);

        // BHM ≡ BiEXNEX(ω = 1).
        let st = with_z(base.clone(), Component::Both);
        let a = log_posterior(&data, &st, &ModelSpec::bhm(prior.clone())).unwrap();
        let b = log_posterior(&data, &st, &ModelSpec::biexnex(&vec![1.0; k], prior.clone())).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "BHM {a} vs BiEXNEX(1) {b}");

        // SA ≡ BiEXNEX(ω = 0, κ = 0).
        let st = with_z(base.clone(), Component::Neither);
        let mut bi0 = ModelSpec::biexnex(&vec![0.0; k], prior.clone());
        bi0.fixed_kappa = Some(0.0);
        let a = log_posterior(&data, &st, &ModelSpec::sa(prior.clone())).unwrap();
        let b = log_posterior(&data, &st, &bi0).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "SA {a} vs BiEXNEX(0, κ=0) {b}");

        // BiEXNEX(ω) ≡ E-BiEXNEX(ω, 0, 0, 1 − ω) on every two-component state.
        let mut st = base;
        for z in st.z.iter_mut() {
            *z = if rng.uniform() < 0.5 { Component::Both } else { Component::Neither };
        }
        let a = log_posterior(&data, &st, &ModelSpec::biexnex(&vec![omega; k], prior.clone())).unwrap();
        let e = ModelSpec::ebiexnex(&vec![[omega, 0.0, 0.0, 1.0 - omega]; k], prior);
        let b = log_posterior(&data, &st, &e).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "BiEXNEX {a} vs E-BiEXNEX {b}");
    }

    #[test]
    fn decision_probabilities_obey_frechet_bounds(
        pairs in prop::collection::vec(prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3), 1..200),
        delta in -1.0f64..1.0,
        eta in 0.0f64..0.999,
    ) {
        let draws = draws_from_pairs(&pairs);
        let rule = DecisionRuleSpec::joint(eta, delta);
        let out = decide(&draws, &rule).unwrap();
        for d in &out.subtrials {
            let p = d.probs;
            prop_assert!(p.prob_joint <= p.prob_tox.min(p.prob_eff) + 1e-15);
            prop_assert!(p.prob_joint >= (p.prob_tox + p.prob_eff - 1.0).max(0.0) - 1e-12);
            // Joint Go implies both marginal events clear the same threshold.
            if p.prob_joint > eta {
                prop_assert!(p.prob_tox > eta && p.prob_eff > eta);
                prop_assert!(DecisionRuleSpec::separate(eta, eta, delta).go(&p));
            }
        }
    }

    #[test]
    fn very_small_margin_reduces_joint_to_toxicity(
        pairs in prop::collection::vec(prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2), 1..100),
    ) {
        let draws = draws_from_pairs(&pairs);
        for p in decision_probabilities(&draws, -1e9).unwrap() {
            prop_assert_eq!(p.prob_eff, 1.0);
            prop_assert_eq!(p.prob_joint, p.prob_tox);
        }
    }

    #[test]
    fn calibrated_threshold_meets_target_and_is_monotone(
        raw in prop::collection::vec(prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 4), 5..60),
        t1 in 0.01f64..1.0,
        t2 in 0.01f64..1.0,
        joint in any::<bool>(),
    ) {
        let probs: Vec<Vec<DecisionProbs>> = raw
            .iter()
            .map(|row| row.iter().map(|&(a, b)| DecisionProbs { prob_tox: a, prob_eff: b, prob_joint: a * b }).collect())
            .collect();
        let template = if joint { DecisionRuleSpec::joint(0.5, 0.0) } else { DecisionRuleSpec::separate(0.5, 0.5, 0.0) };
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let c_lo = calibrate_from_probabilities(&probs, &template, lo).unwrap();
        let c_hi = calibrate_from_probabilities(&probs, &template, hi).unwrap();
        prop_assert!(c_lo.achieved_error <= lo && c_hi.achieved_error <= hi);
        let eta = |c: &bibasket::decisions::Calibration| if joint { c.rule.eta } else { c.rule.eta1 };
        prop_assert!(eta(&c_lo) >= eta(&c_hi));
        if !joint {
            prop_assert_eq!(c_lo.rule.eta1, c_lo.rule.eta2);
        }
    }

    #[test]
    fn oer_respects_union_bounds(
        go in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 1..80),
        labels in prop::collection::vec(any::<bool>(), 4),
    ) {
        let truth: Vec<TruthLabel> = labels.iter().map(|&n| if n { TruthLabel::Null } else { TruthLabel::Desirable }).collect();
        let n = go.len() as f64;
        let errs: Vec<f64> = (0..4)
            .filter(|&i| labels[i])
            .map(|i| go.iter().filter(|r| r[i]).count() as f64 / n)
            .collect();
        match overall_error_rate(&go, &truth) {
            None => prop_assert!(errs.is_empty()),
            Some(oer) => {
                let max = errs.iter().cloned().fold(0.0, f64::max);
                prop_assert!(oer >= max - 1e-12 && oer <= errs.iter().sum::<f64>() + 1e-12);
            }
        }
    }

    #[test]
    fn trial_csv_round_trip(
        arms in prop::collection::vec(
            ((0u32..15, 0u32..15, prop::collection::vec(-1e3f64..1e3, 0..8)),
             (0u32..15, 0u32..15, prop::collection::vec(-1e3f64..1e3, 0..8))),
            1..7),
    ) {
        let arm = |(n, y, z): (u32, u32, Vec<f64>)| ArmData::new(n.max(y), y.min(n.max(y)), z).unwrap();
        let data = TrialData {
            subtrials: arms.into_iter().map(|(c, e)| SubtrialData { arms: [arm(c), arm(e)] }).collect(),
        };
        let (mut a, mut e) = (Vec::new(), Vec::new());
        write_arms_csv(&data, &mut a).unwrap();
        write_efficacy_csv(&data, &mut e).unwrap();
        prop_assert_eq!(read_trial_csv(a.as_slice(), Some(e.as_slice())).unwrap(), data);
    }

    #[test]
    fn generated_trials_are_well_formed(seed in any::<u64>(), rep in 0u64..1000, scen in 0usize..21) {
        let s = &builtin_scenarios()[scen];
        let d = generate_trial(s, seed, rep).unwrap();
        prop_assert_eq!(d.n_subtrials(), s.n_subtrials());
        for (k, sub) in d.subtrials.iter().enumerate() {
            for a in &sub.arms {
                prop_assert!(a.tox <= a.n);
                prop_assert_eq!(a.efficacy.len() as u32, a.n);
                prop_assert_eq!(a.n, s.arm_sizes[k]);
            }
        }
        prop_assert_eq!(generate_trial(s, seed, rep).unwrap(), d);
    }

    #[test]
    fn logit_and_quantile_invert(p in 1e-9f64..(1.0 - 1e-9), m in -5.0f64..5.0, sd in 0.1f64..5.0) {
        prop_assert!((inv_logit(logit(p).unwrap()) - p).abs() < 1e-12);
        let x = normal_quantile(p, m, sd).unwrap();
        prop_assert!((normal_cdf(x, m, sd).unwrap() - p).abs() < 1e-9);
    }
}
