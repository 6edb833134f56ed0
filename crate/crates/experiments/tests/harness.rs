use std::fs;
use std::path::Path;

use carma_experiments::harness::{recompute_summary, write_summary_csv, ROWS_FILE, SUMMARY_FILE};
use carma_experiments::{read_rows, run_experiment, ExperimentConfig, HarnessError, RowStatus};
use carma_renewal::SamplingMode;

fn ou_config(replications: usize, n: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "name": "ou",
            "model": {{"p": 1, "q": 0, "theta0": [1.0]}},
            "noise": {{"kind": "brownian", "variance": 1.0}},
            "sampling": {{"kind": "exponential", "rate": 1.0}},
            "mode": {{"kind": "count", "n": {n}}},
            "replications": {replications},
            "seed": 77,
            "h": 0.01
        }}"#
    ))
    .unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn defaults_are_materialized_into_the_header() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&ou_config(2, 100), Some(dir.path())).unwrap();
    let header: serde_json::Value = serde_json::from_str(&read(dir.path(), "header.json")).unwrap();
    let cfg = &header["config"];
    for key in ["quadrature", "optimizer", "param_box", "init", "h", "max_failure_fraction"] {
        assert!(!cfg[key].is_null(), "{key} missing from header");
    }
    assert_eq!(cfg["quadrature"]["du"], 0.01);
    assert_eq!(cfg["param_box"]["lower"][0], 0.01);
    assert_eq!(header["parameter_names"][0], "a1");
}

#[test]
fn rows_do_not_depend_on_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = ou_config(6, 200);
    cfg.threads = Some(1);
    let ra = run_experiment(&cfg, Some(a.path())).unwrap();
    cfg.threads = Some(3);
    let rb = run_experiment(&cfg, Some(b.path())).unwrap();
    assert_eq!(read(a.path(), ROWS_FILE), read(b.path(), ROWS_FILE));
    assert_eq!(read(a.path(), SUMMARY_FILE), read(b.path(), SUMMARY_FILE));
    assert_eq!(ra.rows, rb.rows);
    let seeds: std::collections::HashSet<_> = ra.rows.iter().map(|r| (r.seed, r.stream)).collect();
    assert_eq!(seeds.len(), 6);
}

#[test]
fn rows_csv_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&ou_config(2, 100), Some(dir.path())).unwrap();
    let rows = read(dir.path(), ROWS_FILE);
    assert_eq!(
        rows.lines().next().unwrap(),
        "replication,seed,stream,n_obs,theta_hat_1,sigma_L2_hat,objective,status,message"
    );
    let parsed = read_rows(&dir.path().join(ROWS_FILE), 1).unwrap();
    assert_eq!(parsed.len(), 2);
    assert!(parsed.iter().all(|r| r.status == RowStatus::Ok && r.n_obs == 100));
}

#[test]
fn summary_recomputes_bit_exactly_from_rows() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&ou_config(5, 150), Some(dir.path())).unwrap();
    let again = recompute_summary(dir.path()).unwrap();
    assert_eq!(again, report.summary);
    let copy = dir.path().join("again.csv");
    write_summary_csv(&copy, &again).unwrap();
    assert_eq!(fs::read(copy).unwrap(), fs::read(dir.path().join(SUMMARY_FILE)).unwrap());

    let s = &report.summary.params[0];
    let x = report.theta_column(0);
    let mean = x.iter().sum::<f64>() / 5.0;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
    assert_eq!(s.mean, mean);
    assert_eq!(s.variance, var);
    assert_eq!(s.bias, mean - 1.0);
    let mse = x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / 5.0;
    assert_eq!(s.rmse, mse.sqrt());
    assert_eq!(report.summary.params[1].name, "sigma_L2");
}

#[test]
fn resume_after_a_crash_matches_an_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let crashed = tempfile::tempdir().unwrap();
    let cfg = ou_config(7, 150);
    run_experiment(&cfg, Some(full.path())).unwrap();
    run_experiment(&cfg, Some(crashed.path())).unwrap();

    // Keep the header line, three rows and half of the fourth.
    let rows = read(crashed.path(), ROWS_FILE);
    let cut: usize = rows.split_inclusive('\n').take(4).map(str::len).sum();
    let half = rows.split_inclusive('\n').nth(4).unwrap().len() / 2;
    fs::write(crashed.path().join(ROWS_FILE), &rows[..cut + half]).unwrap();
    fs::remove_file(crashed.path().join(SUMMARY_FILE)).unwrap();

    let resumed = run_experiment(&cfg, Some(crashed.path())).unwrap();
    assert_eq!(resumed.wall_times.len(), 4, "only the missing replications rerun");
    assert_eq!(read(full.path(), ROWS_FILE), read(crashed.path(), ROWS_FILE));
    assert_eq!(read(full.path(), SUMMARY_FILE), read(crashed.path(), SUMMARY_FILE));
    assert_eq!(read(full.path(), "report.json"), read(crashed.path(), "report.json"));
}

#[test]
fn a_completed_run_is_not_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ou_config(3, 100);
    let first = run_experiment(&cfg, Some(dir.path())).unwrap();
    let second = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert!(second.wall_times.is_empty());
    assert_eq!(first.summary, second.summary);
}

#[test]
fn a_different_experiment_in_the_same_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&ou_config(2, 100), Some(dir.path())).unwrap();
    let mut other = ou_config(2, 100);
    other.seed = 78;
    assert!(matches!(run_experiment(&other, Some(dir.path())), Err(HarnessError::Config(_))));
    let mut threads = ou_config(2, 100);
    threads.threads = Some(2);
    run_experiment(&threads, Some(dir.path())).unwrap();
}

#[test]
fn time_budget_yields_flagged_partial_results_that_can_be_completed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ou_config(40, 100);
    cfg.threads = Some(1);
    cfg.time_budget_secs = Some(1e-9);
    let partial = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert!(partial.summary.partial);
    assert!(partial.summary.completed < 40);
    assert!(read(dir.path(), SUMMARY_FILE).lines().nth(1).unwrap().ends_with(",true"));

    cfg.time_budget_secs = None;
    let done = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert!(!done.summary.partial);
    assert_eq!(done.summary.completed, 40);
    assert_eq!(done.rows, run_experiment(&cfg, None).unwrap().rows);
}

fn failing_config() -> ExperimentConfig {
    let mut cfg = ou_config(10, 100);
    // Almost every horizon this short holds no arrival at all.
    cfg.mode = SamplingMode::Horizon { t: 1e-3 };
    cfg
}

#[test]
fn excess_failures_abort_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&failing_config(), Some(dir.path())).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    match err {
        HarnessError::ExcessFailures { failed, attempted, .. } => assert!(failed * 10 > attempted),
        e => panic!("unexpected {e}"),
    }
    let rows = read_rows(&dir.path().join(ROWS_FILE), 1).unwrap();
    let failed: Vec<_> = rows.iter().filter(|r| r.status == RowStatus::Failed).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|r| r.theta_hat[0].is_nan() && !r.message.is_empty()));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    assert!(!report["failures"].as_array().unwrap().is_empty());
}

#[test]
fn failures_under_the_limit_are_flagged_and_excluded() {
    let mut cfg = failing_config();
    cfg.max_failure_fraction = 1.0;
    let report = run_experiment(&cfg, None).unwrap();
    assert_eq!(report.summary.failed + report.summary.ok + report.summary.boundary, 10);
    assert!(report.summary.failed > 0);
    assert_eq!(report.summary.params[0].count, 10 - report.summary.failed);
}

#[test]
fn invalid_configurations_are_config_errors() {
    let bad = [
        r#"{"model": {"p": 1, "q": 0, "theta0": [1.0]}}"#,
        r#"{"model": {"p": 1, "q": 0, "theta0": [1.0]}, "noise": {"kind": "brownian", "variance": 1.0},
            "sampling": {"kind": "exponential", "rate": 1.0}, "mode": {"kind": "count", "n": 10},
            "replications": 1, "seed": 1, "typo": 3}"#,
    ];
    for text in bad {
        assert!(matches!(ExperimentConfig::from_json(text), Err(HarnessError::Config(_))));
    }
    let checks: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
        Box::new(|c| c.replications = 0),
        Box::new(|c| c.h = -1.0),
        Box::new(|c| c.model.theta0 = vec![-1.0]),
        Box::new(|c| c.model.theta0 = vec![1.0, 2.0]),
        Box::new(|c| c.max_failure_fraction = 2.0),
        Box::new(|c| c.mode = SamplingMode::Count { n: 1 }),
        Box::new(|c| c.quadrature.du = 0.0),
        Box::new(|c| c.param_box = Some(carma_renewal::ParamBox::new(1, 0, vec![2.0], vec![3.0]).unwrap())),
    ];
    for change in checks {
        let mut c = ou_config(2, 100);
        change(&mut c);
        let err = run_experiment(&c, None).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }
}

#[test]
fn mode_switch_uses_the_expected_horizon() {
    let c = ou_config(1, 1000);
    let mut beta2 = c.clone();
    beta2.sampling = carma_renewal::SamplingSpec::exponential(2.0).unwrap();
    assert_eq!(beta2.with_mode_kind(true).mode, SamplingMode::Horizon { t: 500.0 });
    assert_eq!(beta2.with_mode_kind(true).with_mode_kind(false).mode, SamplingMode::Count { n: 1000 });
    assert_eq!(c.with_mode_kind(false), c);
}
