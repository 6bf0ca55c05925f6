use std::fs;
use std::path::Path;
use std::process::Command;

use tfusion::scenario::{ResultsTable, ScenarioConfig};
use tfusion_cli::{parse_config, CliConfigFile, CliError};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tfusion"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn minimal_file_keeps_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.toml", "[scenario]\nruns = 10\n");
    let exp = parse_config(&path).unwrap();
    assert_eq!(exp.scenario, ScenarioConfig { runs: 10, ..ScenarioConfig::default() });
    assert_eq!(exp.scenario.steps, 100);
    assert_eq!(exp.scenario.delta_t, 1.0);
    assert_eq!(exp.scenario.filter_dofs.nu_r, 3.0);
    assert_eq!(exp.scenario.sensors[1].noise.nominal_sigma, 10.0);
    assert_eq!(exp.methods.len(), 10);
    assert_eq!(exp.sweep, None);
}

#[test]
fn unknown_method_is_rejected() {
    let err = CliConfigFile::from_toml("methods = [\"stkf-aa\", \"ukf-aa\"]\n")
        .unwrap()
        .into_experiment()
        .unwrap_err();
    assert!(matches!(&err, CliError::Config(m) if m.contains("methods") && m.contains("ukf-aa")), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn sweep_list_is_accepted() {
    let exp = CliConfigFile::from_toml("p_o = [0, 0.05, 0.1, 0.15, 0.2]\n")
        .unwrap()
        .into_experiment()
        .unwrap();
    assert_eq!(exp.sweep, Some(vec![0.0, 0.05, 0.1, 0.15, 0.2]));
    assert!(CliConfigFile::from_toml("p_o = [1.5]\n").unwrap().into_experiment().is_err());
}

#[test]
fn unknown_keys_and_syntax_errors_report_location() {
    let err = CliConfigFile::from_toml("methods = [\"kf-aa\"]\n\n[scenario]\nrunz = 3\n").unwrap_err();
    let CliError::Config(msg) = err else { panic!() };
    assert!(msg.contains("runz") && msg.contains("line 4"), "{msg}");

    let err = CliConfigFile::from_toml("methods = [\n").unwrap_err();
    let CliError::Config(msg) = err else { panic!() };
    assert!(msg.contains("line"), "{msg}");
}

#[test]
fn invalid_scenario_names_key() {
    let err = CliConfigFile::from_toml("[scenario]\nsteps = 0\n").unwrap().into_experiment().unwrap_err();
    assert!(matches!(&err, CliError::Config(m) if m.contains("scenario") && m.contains("steps")), "{err}");
}

#[test]
fn config_round_trip() {
    let default = CliConfigFile::default();
    assert_eq!(CliConfigFile::from_toml(&default.to_toml().unwrap()).unwrap(), default);

    let mut custom = CliConfigFile {
        methods: vec!["kf-ci".into(), "stkf-am".into()],
        p_o: Some(vec![0.0, 0.02]),
        output: Some("out/results.csv".into()),
        ..CliConfigFile::default()
    };
    custom.scenario.runs = 7;
    custom.scenario.seed = 99;
    custom.scenario.noiseless = true;
    custom.scenario.sensors[0].noise.outlier_prob = 0.3;
    custom.scenario.initial_cov[1][1] = 0.1 + 0.2;
    assert_eq!(CliConfigFile::from_toml(&custom.to_toml().unwrap()).unwrap(), custom);
}

#[test]
fn run_is_deterministic_and_has_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "p_o = [0.05]\n[scenario]\nsteps = 20\n");
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let status = bin()
            .args(["run", "--runs", "5", "--seed", "7", "--parallel", "1", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let summary = dir.path().join(name.replace(".csv", ".summary.csv"));
        outputs.push((fs::read(&out).unwrap(), fs::read(&summary).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);

    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p_o,method,step,position_rmse,velocity_rmse"));
    assert_eq!(lines.count(), 10 * 20);
    assert!(text.lines().all(|l| l.split(',').count() == 5));

    let rows = ResultsTable::read_summary_csv(&outputs[0].1[..]).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.avg_position_rmse.is_finite() && r.p_o == 0.05));
}

#[test]
fn json_output_has_summary_objects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "methods = [\"stkf-aa\", \"kf-single\"]\n[scenario]\nsteps = 5\n");
    let out = dir.path().join("r.json");
    let status = bin()
        .args(["run", "--runs", "2", "--format", "json", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let value: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let summary = value["summary"].as_array().unwrap();
    assert_eq!(summary.len(), 2);
    for key in ["p_o", "method", "avg_position_rmse", "avg_velocity_rmse", "mean_weight_sensor_1", "excluded_runs"] {
        assert!(summary[0].get(key).is_some(), "missing {key}");
    }
    assert!(summary[1]["mean_weight_sensor_1"].is_null());
    assert_eq!(value["steps"].as_array().unwrap().len(), 10);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "methods = [\"nope\"]\n");
    let status = bin().args(["run", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let missing = bin().args(["run", "--config", "/nonexistent/c.toml"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));

    let zero = bin().args(["run", "--runs", "0"]).status().unwrap();
    assert_eq!(zero.code(), Some(2));

    let cfg = write(dir.path(), "ok.toml", "methods = [\"kf-single\"]\n[scenario]\nsteps = 2\nruns = 1\n");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--out", "/nonexistent/dir/out.csv"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn diagnostics_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kl.csv");
    let status = bin()
        .args(["diagnostics", "--points", "4", "--samples", "5000", "--scale-ratios", "1,2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scale_ratio,offset,mc_kl,mc_std_error,moment_gaussian_kl,scale_gaussian_kl")
    );
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(&first[..3], &[1.0, 0.0, 0.0]);
    assert!(first[4].abs() < 1e-12 && first[5].abs() < 1e-12);
    assert_eq!(text.lines().count(), 1 + 2 * 4);

    let middle = fs::read_to_string(dir.path().join("kl.middle.csv")).unwrap();
    assert!(middle.starts_with("scale_ratio,offset,weight_first,kl_first,kl_second,residual"));
    assert_eq!(middle.lines().count(), 1 + 2 * 4);
}
