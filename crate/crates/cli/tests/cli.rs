use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"[problem]
dim = 1
potential = "squared-norm"
coefficient = { kind = "expression", entries = [["2 + cos(2*pi*y)"]] }

[discretization]
torus_modes = 16
hermite_n = 32

[experiment]
j = 1
epsilons = [0.2, 0.1, 0.05]
order = 2
count = 4
"#;

fn twoscale(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoscale")).args(args).current_dir(dir).output().unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

#[test]
fn sweep_writes_manifest_and_table() {
    let dir = setup(CONFIG);
    let out = twoscale(&["--config", "run.toml", "--out", "o", "sweep"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("o/errors.csv")).unwrap();
    assert!(csv.starts_with("epsilon,j,branch,lambda_ref,lambda_ref_richardson,lambda_tilde,eig_err,l2_err,h1_err,h,R,runtime_s"));
    assert_eq!(csv.lines().count(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["config"], CONFIG);

    let plot = twoscale(&["--out", "o", "plot-data"], dir.path());
    assert!(plot.status.success(), "{}", String::from_utf8_lossy(&plot.stderr));
    assert!(dir.path().join("o/eig_err_simple.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = setup(CONFIG);
    let a = twoscale(&["--config", "run.toml", "--out", "a", "--workers", "1", "sweep"], dir.path());
    let b = twoscale(&["--config", "run.toml", "--out", "b", "sweep"], dir.path());
    assert!(a.status.success() && b.status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("errors.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn stages_run_individually() {
    let dir = setup(CONFIG);
    for stage in ["homogenize", "spectrum", "expand", "reference"] {
        let out = twoscale(&["--config", "run.toml", "--out", "o", stage], dir.path());
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = twoscale(&["--config", "run.toml", "--out", "o", "expand", "--samples", "9"], dir.path());
    assert!(out.status.success());
    let samples = std::fs::read_to_string(dir.path().join("o/w_eps.csv")).unwrap();
    assert_eq!(samples.lines().count(), 10);
}

#[test]
fn config_errors_exit_3() {
    let dir = setup(&CONFIG.replace("[0.2, 0.1, 0.05]", "[0.05, 0.1]"));
    let out = twoscale(&["--config", "run.toml", "homogenize"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = twoscale(&["--config", "missing.toml", "homogenize"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = twoscale(&["homogenize"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_passes_and_reports_faults() {
    let dir = tempfile::tempdir().unwrap();
    let ok = twoscale(&["verify"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = twoscale(&["verify", "--inject-fault", "1e-6"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    let text = String::from_utf8_lossy(&bad.stdout);
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].contains("cyclic_identity"));
    let tight = twoscale(&["verify", "--tolerance-scale", "1e-4"], dir.path());
    assert_eq!(tight.status.code(), Some(2));
}

#[test]
fn plot_data_without_sweep_fails() {
    let dir = setup(CONFIG);
    assert!(twoscale(&["--config", "run.toml", "--out", "o", "spectrum"], dir.path()).status.success());
    let out = twoscale(&["--out", "o", "plot-data"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}
