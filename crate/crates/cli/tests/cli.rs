use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const FAST_MCMC: &str = "[mcmc]\nchains = 2\nburn_in = 300\niterations = 600\n";

fn bibasket(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bibasket"))
        .args(args)
        .current_dir(dir)
        .env_remove("BIBASKET_THREADS")
        .output()
        .unwrap()
}

fn with_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn scenarios_lists_every_builtin() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bibasket(&["scenarios", "--out", "t"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&tmp.path().join("t/scenarios.csv"));
    assert_eq!(rows.len(), 21 * 6);
    let ia1 = rows.iter().find(|r| &r[0] == "Ia" && &r[1] == "1").unwrap();
    assert_eq!(&ia1[9], "desirable");
}

#[test]
fn invalid_weight_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_config(tmp.path(), "[[model]]\nkind = \"BiEXNEX\"\nomega = 1.2\n");
    let o = bibasket(&["fit", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model[0].omega"), "{}", stderr(&o));
}

#[test]
fn syntax_error_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_config(tmp.path(), "seed = \n");
    let o = bibasket(&["oc", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn oc_without_scenarios_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bibasket(&["oc", "--reps", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stand_alone_equals_biexnex_with_zero_weight() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_config(
        tmp.path(),
        &format!(
            "seed = 11\n[fit]\nscenario = \"IIa\"\n[[model]]\nkind = \"SA\"\n\
             [[model]]\nkind = \"BiEXNEX\"\nomega = 0.0\nkappa = 0.0\n{FAST_MCMC}"
        ),
    );
    let o = bibasket(&["fit", "--config", &cfg, "--out", "fit"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let sa = fs::read(tmp.path().join("fit/SA/summary.csv")).unwrap();
    let bi = fs::read(tmp.path().join("fit/BiEXNEX/summary.csv")).unwrap();
    assert!(!sa.is_empty());
    assert_eq!(sa, bi);
}

#[test]
fn bhm_on_global_null_shrinks_efficacy_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_config(tmp.path(), "seed = 5\n[fit]\nscenario = \"Global Null\"\n[[model]]\nkind = \"BHM\"\n");
    let o = bibasket(&["fit", "--config", &cfg, "--out", "fit"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&tmp.path().join("fit/BHM/summary.csv"));
    let medians: Vec<f64> = rows.iter().filter(|r| r[0].starts_with("theta_e")).map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(medians.len(), 6);
    assert!(medians.iter().all(|m| m.abs() <= 0.5), "{medians:?}");
}

#[test]
fn fit_writes_one_weight_pair_per_subtrial_and_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_config(
        tmp.path(),
        &format!("[fit]\nscenario = \"Ib\"\ndump_draws = true\n[[model]]\nkind = \"E-BiEXNEX\"\n{FAST_MCMC}"),
    );
    let o = bibasket(&["fit", "--config", &cfg, "--out", "fit"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("fit/E-BiEXNEX");
    let weights = read_csv(&dir.join("weights.csv"));
    assert_eq!(weights.len(), 6);
    for w in &weights {
        for v in [&w[1], &w[2]] {
            assert!((0.0..=1.0).contains(&v.parse::<f64>().unwrap()));
        }
    }
    assert_eq!(read_csv(&dir.join("decisions.csv")).len(), 6);
    let draws = read_csv(&dir.join("draws.csv"));
    // 2 chains × 600 draws × (42 coordinates + 6 indicators)
    assert_eq!(draws.len(), 2 * 600 * 48);
    assert!(tmp.path().join("fit/arms.csv").exists());
}

#[test]
fn fit_ingests_csv_tables() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("arms.csv"), "subtrial,arm,n,tox_count\n1,C,10,4\n1,E,10,2\n2,C,8,3\n2,E,8,3\n").unwrap();
    fs::write(
        tmp.path().join("eff.csv"),
        "subtrial,arm,value\n1,C,0.1\n1,C,0.4\n1,E,1.2\n1,E,0.9\n2,C,0.3\n2,E,0.2\n2,E,0.5\n",
    )
    .unwrap();
    let cfg = with_config(
        tmp.path(),
        &format!("[fit]\narms = \"arms.csv\"\nefficacy = \"eff.csv\"\n[[model]]\nkind = \"IndEXNEX\"\n{FAST_MCMC}"),
    );
    let o = bibasket(&["fit", "--config", &cfg, "--out", "fit"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_csv(&tmp.path().join("fit/IndEXNEX/weights.csv")).len(), 2);
}

#[test]
fn ingestion_schema_mismatch_names_the_column() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("arms.csv"), "subtrial,arm,n,tox\n1,C,10,4\n1,E,10,2\n").unwrap();
    let cfg = with_config(tmp.path(), "[fit]\narms = \"arms.csv\"\n");
    let o = bibasket(&["fit", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tox_count"), "{}", stderr(&o));
}

#[test]
fn non_finite_posterior_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("arms.csv"), "subtrial,arm,n,tox_count\n1,C,2,1\n1,E,2,1\n").unwrap();
    fs::write(tmp.path().join("eff.csv"), "subtrial,arm,value\n1,C,1e300\n1,C,-1e300\n1,E,1e300\n1,E,-1e300\n").unwrap();
    let cfg = with_config(
        tmp.path(),
        &format!("[fit]\narms = \"arms.csv\"\nefficacy = \"eff.csv\"\n[[model]]\nkind = \"SA\"\n{FAST_MCMC}"),
    );
    let o = bibasket(&["fit", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

const OC_CONFIG: &str = "scenarios = [\"Global Null\", \"Ia\"]\nn_reps = 6\n[decision]\neta = 0.6\n\
                         [mcmc]\nchains = 2\nburn_in = 100\niterations = 200\n";

#[test]
fn oc_row_counts_plots_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_config(tmp.path(), OC_CONFIG);
    let a = bibasket(&["oc", "--config", &cfg, "--out", "a", "--threads", "1", "--emit-plots"], tmp.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let b = bibasket(&["oc", "--config", &cfg, "--out", "b", "--threads", "3"], tmp.path());
    assert!(b.status.success(), "{}", stderr(&b));

    let report = fs::read(tmp.path().join("a/oc_report.csv")).unwrap();
    assert_eq!(report, fs::read(tmp.path().join("b/oc_report.csv")).unwrap());
    let rows = read_csv(&tmp.path().join("a/oc_report.csv"));
    let null: Vec<_> = rows.iter().filter(|r| &r[0] == "Global Null").collect();
    assert_eq!(null.iter().filter(|r| &r[8] == "type1_error").count(), 5 * 6);
    assert_eq!(null.iter().filter(|r| &r[8] == "oer").count(), 5);
    assert_eq!(null.len(), 35);
    let ia: Vec<_> = rows.iter().filter(|r| &r[0] == "Ia").collect();
    assert!(ia.iter().all(|r| &r[8] == "power"));
    assert_eq!(ia.len(), 30);

    let plots = tmp.path().join("a/plots");
    for f in ["Global_Null_type1_error.svg", "Global_Null_oer.svg", "Ia_power.svg"] {
        let svg = fs::read_to_string(plots.join(f)).unwrap();
        assert_eq!(svg.matches("<title>").count(), if f.contains("oer") { 5 } else { 30 });
    }
    assert!(!tmp.path().join("b/plots").exists());
    assert_eq!(read_csv(&tmp.path().join("a/thresholds.csv")).len(), 5);
}

#[test]
fn threads_env_var_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bibasket"))
        .args(["scenarios"])
        .current_dir(tmp.path())
        .env("BIBASKET_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrate_writes_thresholds_meeting_target() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_config(
        tmp.path(),
        "n_reps = 40\n[[model]]\nkind = \"SA\"\n[decision]\ntarget_error = 0.2\n\
         [mcmc]\nchains = 2\nburn_in = 100\niterations = 200\n",
    );
    let o = bibasket(&["calibrate", "--config", &cfg, "--out", "cal"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&tmp.path().join("cal/thresholds.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][6], "calibrated");
    assert!(rows[0][7].parse::<f64>().unwrap() <= 0.2);
    let errors = read_csv(&tmp.path().join("cal/calibration_errors.csv"));
    assert_eq!(errors.len(), 6);
}
