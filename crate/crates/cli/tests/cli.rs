use std::path::Path;
use std::process::{Command, Output};

fn sparsedet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsedet"))
        .args(args)
        .env_remove("SPARSEDET_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const CONFIG: &str = r#"
schema_version = 1
model = "mean"
p = 12
k = 2
replicates = 16
seed = 4
lambda_grid = [3.0, 9.0]

[signal]
kind = "least_favorable"
m = 4

[[tests]]
name = "threshold"

[[tests]]
name = "chi2_scan"
m = 3
strategy = { kind = "random_restarts", restarts = 3, iters = 5 }
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn boundary_prints_upper_rate_row() {
    let o = sparsedet(&["boundary", "--p", "10000", "--k", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("p,k,lambda1,lambda0"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let l1: f64 = row[2].parse().unwrap();
    assert!((l1 - 6.0697).abs() < 1e-4);
}

#[test]
fn missing_config_exits_2_naming_the_file() {
    let o = sparsedet(&["simulate", "no-such-config.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-config.toml"));
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_2() {
    let o = sparsedet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn invalid_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &CONFIG.replace("replicates = 16", "replicates = 0"));
    let o = sparsedet(&["simulate", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicates"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.toml", CONFIG);
    let csv = dir.path().join("out.csv");
    let svg = dir.path().join("out.svg");
    let o = sparsedet(&[
        "simulate",
        &cfg,
        "--out",
        csv.to_str().unwrap(),
        "--plot",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = sparsedet::experiment::read_phase_csv(&csv).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.toml", CONFIG);
    let a = sparsedet(&["simulate", &cfg, "--seed", "99"]);
    let b = sparsedet(&["simulate", &cfg.clone(), "--seed", "99"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).lines().nth(1).unwrap().ends_with(",99"));
}

#[test]
fn thread_flag_wins_over_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.toml", CONFIG);
    let bad_env = Command::new(env!("CARGO_BIN_EXE_sparsedet"))
        .args(["simulate", &cfg])
        .env("SPARSEDET_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(2));
    let flagged = Command::new(env!("CARGO_BIN_EXE_sparsedet"))
        .args(["simulate", &cfg, "--threads", "2"])
        .env("SPARSEDET_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(flagged.status.code(), Some(0));
    let env_only = Command::new(env!("CARGO_BIN_EXE_sparsedet"))
        .args(["simulate", &cfg])
        .env("SPARSEDET_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(env_only.stdout, flagged.stdout);
}

#[test]
fn witness_on_all_ones_block() {
    let dir = tempfile::tempdir().unwrap();
    let m = sparsedet::DenseMatrix::from_fn(10, 10, |i, j| if (2..6).contains(&i) && (3..7).contains(&j) { 1.0 } else { 0.0 });
    let path = dir.path().join("block.mtx");
    sparsedet::io::write_matrix(&path, &m).unwrap();
    let o = sparsedet(&["witness", "--in", path.to_str().unwrap(), "--k", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["ratio"].as_f64().unwrap() >= 0.125);
    assert_eq!(v["success"], serde_json::Value::Bool(true));
}

#[test]
fn witness_missing_matrix_is_a_usage_error() {
    let o = sparsedet(&["witness", "--in", "absent.mtx", "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.mtx"));
}

#[test]
fn divergence_sweep_csv_schema() {
    let o = sparsedet(&[
        "divergence", "chi2", "--p", "30", "--k", "2", "--m", "5", "--s", "0,0.5,1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,k,m,s,value,method,se");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("30,2,5,0.0000000000000000e0,0.0000000000000000e0,exact,"));

    let bound = sparsedet(&[
        "divergence", "chi2", "--p", "30", "--k", "2", "--m", "5", "--s", "1", "--method", "cs-bound",
    ]);
    let exact: f64 = lines[3].split(',').nth(4).unwrap().parse().unwrap();
    let b: f64 = stdout(&bound).lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!(b >= exact);
}

#[test]
fn divergence_single_records() {
    let o = sparsedet(&["divergence", "mgf-gh", "--p", "4", "--m", "2", "--t", "0.1"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["value"].as_f64().unwrap() - 1.1111).abs() < 1e-4);

    let o = sparsedet(&["divergence", "permutation", "--p", "2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let exact = (1.0 + std::f64::consts::E.powi(2)) / 2.0;
    assert!((v["value"].as_f64().unwrap() - exact).abs() < 1e-12);

    let o = sparsedet(&["divergence", "mgf-h", "--p", "4", "--m", "5", "--lambda", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrate_cov_scan_reports_threshold() {
    let o = sparsedet(&[
        "calibrate", "cov-scan", "--p", "8", "--n", "40", "--m", "2", "--reps", "30", "--seed", "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let t = v["t"].as_f64().unwrap();
    assert!(t > 0.0 && t < 10.0);
}
