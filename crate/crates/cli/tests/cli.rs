use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use privscore::report::read_records;
use privscore::scm::{self, Scenario, ScmSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_privscore"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dag_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/sim_dag.json")
}

/// Writes a simulated data set plus its column spec into `dir`.
fn write_sim_data(dir: &Path, scenario: Scenario, n: usize) -> (PathBuf, PathBuf) {
    let samples = scm::sample_paired(&ScmSpec {
        scenario,
        n,
        seed: 11,
    });
    let data = dir.join("data.csv");
    scm::to_table(&samples).unwrap().save_csv(&data).unwrap();
    let columns = dir.join("columns.json");
    std::fs::write(
        &columns,
        r#"{"A": {"kind": "binary", "role": "pa"},
            "C": {"kind": "numeric", "role": "confounder"},
            "X1": {"kind": "numeric", "role": "feature"},
            "X2": {"kind": "binary", "role": "feature"},
            "Y": {"kind": "binary", "role": "target"}}"#,
    )
    .unwrap();
    (data, columns)
}

fn audit(dir: &Path, data: &Path, columns: &Path, out: &str, extra: &[&str]) -> Output {
    let out = dir.join(out);
    let dag = dag_path();
    let mut args = vec![
        "audit",
        "--data",
        data.to_str().unwrap(),
        "--columns",
        columns.to_str().unwrap(),
        "--dag",
        dag.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--model",
        "logistic",
        "--bootstrap",
        "20",
        "--seed",
        "5",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn missing_dag_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, columns) = write_sim_data(dir.path(), Scenario::Sc, 60);
    let missing = dir.path().join("nope.json");
    let o = run(&[
        "audit",
        "--data",
        data.to_str().unwrap(),
        "--columns",
        columns.to_str().unwrap(),
        "--dag",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"), "{}", stderr(&o));
}

#[test]
fn bad_flag_value_exits_with_usage_code() {
    let o = run(&["simulate", "--scenario", "xyz"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn too_few_replicates_is_rejected() {
    let o = run(&["simulate", "--bootstrap", "3", "--n", "50", "--iters", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicates"));
}

#[test]
fn audit_is_deterministic_and_rows_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let (data, columns) = write_sim_data(dir.path(), Scenario::Sc, 300);
    for out in ["a", "b"] {
        let o = audit(dir.path(), &data, &columns, out, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "ps.csv",
        "subgroups.json",
        "worlds.json",
        "regression.txt",
        "warped_test.csv",
    ] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let file = std::fs::File::open(dir.path().join("a/ps.csv")).unwrap();
    let records = read_records(file).unwrap();
    assert_eq!(records.len(), 60);
    for r in &records {
        assert!((r.ps - (r.pred_real - r.pred_warped)).abs() < 1e-9);
        let sum = r.delta_g + r.delta_x + r.gamma.iter().sum::<f64>();
        assert!((r.ps - sum).abs() < 1e-9);
        assert_eq!(r.replicates, Some(20));
    }
}

#[test]
fn explain_and_pfi_read_an_audit_run() {
    let dir = tempfile::tempdir().unwrap();
    let (data, columns) = write_sim_data(dir.path(), Scenario::Sc, 200);
    let o = audit(dir.path(), &data, &columns, "run", &["--svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = dir.path().join("run");
    let file = std::fs::File::open(run_dir.join("ps.csv")).unwrap();
    let id = read_records(file).unwrap()[0].id.clone();
    assert!(run_dir.join("svg").join(format!("{id}.svg")).exists());

    let o = run(&["explain", "--run", run_dir.to_str().unwrap(), "--id", &id]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(record["id"], id.as_str());
    let svg = std::fs::read_to_string(run_dir.join(format!("explain_{id}.svg"))).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 5);

    let o = run(&[
        "explain",
        "--run",
        run_dir.to_str().unwrap(),
        "--id",
        "999999",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("available ids"), "{}", stderr(&o));

    let o = run(&["pfi", "--run", run_dir.to_str().unwrap(), "--repeats", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("feature,importance\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn single_iteration_simulation_has_degenerate_quantiles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = run(&[
        "--workers",
        "1",
        "simulate",
        "--scenario",
        "sc",
        "--n",
        "150",
        "--iters",
        "1",
        "--bootstrap",
        "20",
        "--model",
        "logistic",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for c in report["components"].as_array().unwrap() {
        for m in ["bias", "mse", "coverage", "ci_width"] {
            assert_eq!(c[m]["mean"], c[m]["q05"]);
            assert_eq!(c[m]["mean"], c[m]["q95"]);
        }
    }
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["bootstrap"], 20);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"bootstrap": 3, "n": 120, "iterations": 1, "model": "logistic"}"#,
    )
    .unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--bootstrap",
        "20",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}
