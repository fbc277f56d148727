use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tvpsv::cli::{cmd_forecast, cmd_simulate, cmd_trade, cmd_verify, RunConfig};
use tvpsv::data::{load_panel, save_panel, schema_for, simulate_dgp, DgpFamily, DgpSpec, DgpTruth};
use tvpsv::Error;

fn write_panel(dir: &Path) -> PathBuf {
    let (panel, _) = simulate_dgp(&DgpSpec::default_for(DgpFamily::TTvp, 3, 1), 70, 9).unwrap();
    let path = dir.join("panel.csv");
    save_panel(&panel, &path).unwrap();
    path
}

fn forecast_config(dir: &Path, models: &[&str]) -> PathBuf {
    write_panel(dir);
    let models: Vec<String> = models.iter().map(|m| format!("\"{m}\"")).collect();
    let text = format!(
        r#"{{
  "schema_version": 1,
  "data": {{"path": "panel.csv",
            "schema": {{"date_column": "date", "value_columns": ["y1", "y2", "y3"], "targets": ["y1", "y2", "y3"]}}}},
  "models": [{}],
  "holdout": 4,
  "mcmc": {{"iterations": 200, "max_components": 40}},
  "output_dir": "out",
  "seed": 99,
  "jobs": 2
}}"#,
        models.join(", ")
    );
    let path = dir.join("run.json");
    fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn simulate_writes_reloadable_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sim.json");
    fs::write(
        &cfg_path,
        r#"{"schema_version": 1, "output_dir": "sim", "seed": 4,
            "simulate": {"family": "tTvpNg", "t": 300, "m": 3}}"#,
    )
    .unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let files = cmd_simulate(&cfg).unwrap();
    assert_eq!(files.len(), 2);
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();

    let (expected, truth) =
        simulate_dgp(&DgpSpec::default_for(DgpFamily::TTvp, 3, 1), 300, 4).unwrap();
    let loaded = load_panel(&files[0], &schema_for(&expected)).unwrap();
    assert_eq!(loaded, expected);
    let loaded_truth = DgpTruth::load(&files[1]).unwrap();
    assert_eq!(loaded_truth.h_paths, truth.h_paths);
    assert_eq!(loaded_truth.beta_paths, truth.beta_paths);

    cmd_simulate(&cfg).unwrap();
    let second: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn unknown_family_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "output_dir": "o", "seed": 1, "simulate": {"family": "garch", "t": 100, "m": 2}}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tvpsv"))
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("garch"));
}

#[test]
fn forecast_trade_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(forecast_config(dir.path(), &["tTvpNg", "arSv"])).unwrap();
    let summary = cmd_forecast(&cfg).unwrap();
    assert_eq!((summary.computed, summary.reused), (8, 0));
    let out = &cfg.output_dir;

    let table1 = csv_rows(&out.join("table1_scores.csv"));
    assert_eq!(table1.len(), 1 + 2);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 99);
    assert!(meta["window_seed_rule"]
        .as_str()
        .unwrap()
        .contains("splitmix64"));
    assert_eq!(csv_rows(&out.join("log_scores.csv")).len(), 1 + 2 * 4);

    cmd_trade(&cfg).unwrap();
    let sharpe = csv_rows(&out.join("table3_sharpe.csv"));
    assert_eq!(sharpe[0].len(), 1 + 1 + 3);
    let labels: Vec<&str> = sharpe.iter().skip(1).map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["t-TVP NG", "AR-SV", "Equal weights", "only y1"]);

    let report = cmd_verify(&cfg).unwrap();
    assert!(report.checked >= 10);
    let first_line = fs::read_to_string(out.join("table3_sharpe.csv")).unwrap();
    assert!(first_line.starts_with(&format!("# config_hash: {}", cfg.hash())));

    // tampering is caught
    let target = out.join("table1_scores.csv");
    let mut text = fs::read_to_string(&target).unwrap();
    text.push_str("extra,row\n");
    fs::write(&target, text).unwrap();
    assert!(matches!(cmd_verify(&cfg), Err(Error::Verification(_))));
}

#[test]
fn resume_skips_completed_jobs_and_matches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(forecast_config(dir.path(), &["ngVar", "rwSv"])).unwrap();
    cmd_forecast(&cfg).unwrap();
    let names = [
        "table1_scores.csv",
        "log_scores.csv",
        "table2_pit.csv",
        "pit_z.csv",
        "bayes_factors.csv",
    ];
    let full: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(cfg.output_dir.join(n)).unwrap())
        .collect();

    // an interrupted run: two archives never written, no tables yet
    fs::remove_file(cfg.output_dir.join("archive/ngVar/window_0002.json")).unwrap();
    fs::remove_file(cfg.output_dir.join("archive/rwSv/window_0000.json")).unwrap();
    for n in names {
        fs::remove_file(cfg.output_dir.join(n)).unwrap();
    }
    let summary = cmd_forecast(&cfg).unwrap();
    assert_eq!((summary.computed, summary.reused), (2, 6));
    let resumed: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(cfg.output_dir.join(n)).unwrap())
        .collect();
    assert_eq!(full, resumed);
}

#[test]
fn trade_without_forecast_names_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(forecast_config(dir.path(), &["arSv"])).unwrap();
    match cmd_trade(&cfg) {
        Err(Error::MissingArtifact(msg)) => assert!(msg.contains("forecast")),
        other => panic!("expected a missing-artifact error, got {other:?}"),
    }
}

#[test]
fn changed_settings_invalidate_archives_for_trade() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(forecast_config(dir.path(), &["arSv"])).unwrap();
    cmd_forecast(&cfg).unwrap();
    cfg.mcmc.iterations = 300;
    assert!(matches!(cmd_trade(&cfg), Err(Error::MissingArtifact(_))));
}

#[test]
fn binary_reports_success_and_runtime_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = forecast_config(dir.path(), &["arSv"]);
    let run = |sub: &str| {
        Command::new(env!("CARGO_BIN_EXE_tvpsv"))
            .arg(sub)
            .arg("--config")
            .arg(&cfg)
            .output()
            .unwrap()
    };
    assert_eq!(run("forecast").status.code(), Some(0));
    assert_eq!(run("trade").status.code(), Some(0));
    assert_eq!(run("verify").status.code(), Some(0));
    let missing = Command::new(env!("CARGO_BIN_EXE_tvpsv"))
        .args(["forecast", "--config"])
        .arg(dir.path().join("absent.json"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
