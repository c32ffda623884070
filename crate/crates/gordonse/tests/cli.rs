use std::process::Command;

use gordonse::analysis::Check;
use gordonse::cli::{self, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gordonse"))
}

#[test]
fn unknown_figure_exits_nonzero() {
    let out = bin().args(["reproduce-figure", "--figure", "5"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("valid ids"), "{err}");
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "model.dimension=10\n").unwrap();
    let out = bin().arg("simulate").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "model.d=20\nmodel.n=400\nmodel.sigma=0.1\nrun.T=4\nrun.trials=3\ninit.scheme=sphere\n").unwrap();
    let out_dir = dir.path().join("out");
    let status = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .args(["--threads", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    let traj = std::fs::read_to_string(out_dir.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 3 * 5);
    assert!(std::fs::read_to_string(out_dir.join("summary.json")).unwrap().contains("\"kappa\""));
    assert_eq!(std::fs::read_to_string(out_dir.join("predictions.csv")).unwrap().lines().count(), 6);
}

#[test]
fn zero_iterations_yield_initial_state_only() {
    let cfg = RunConfig::parse("model.d=10\nmodel.n=100\nrun.T=0\nrun.trials=2\n").unwrap();
    let out = cli::simulate(&cfg).unwrap();
    assert!(out.trials.iter().all(|t| t.entries.len() == 1));
    assert_eq!(out.gordon.unwrap().len(), 1);
}

#[test]
fn property_suite_negative_control_fails() {
    // A deliberately false inequality: 2 <= 1 everywhere.
    let rows = cli::property_suite(vec![Check::new("injected F == 2 <= 1", 0.0, |_| Some(1.0 - 2.0))]).unwrap();
    let injected: Vec<_> = rows.iter().filter(|r| r.group == "injected").collect();
    assert_eq!(injected.len(), 1);
    assert!(!injected[0].passed);
    assert!((injected[0].value + 1.0).abs() < 1e-15);
    assert!(rows.iter().filter(|r| r.group != "injected").all(|r| r.passed));
}

#[test]
fn figure_svg_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    cli::cmd_reproduce_figure("4", cli::Scale::Desk, 1, dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("figure_4.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("Gordon gd_pr"));
    let csv = std::fs::read_to_string(dir.path().join("figure_4.csv")).unwrap();
    assert!(csv.contains(",d_l2,") && csv.contains(",d_angle,"));
}

#[test]
fn noiseless_run_from_truth_stays_at_zero_error() {
    let cfg = RunConfig::parse("model.d=15\nmodel.n=300\ninit.scheme=truth\nrun.T=3\nrun.trials=2\n").unwrap();
    let out = cli::simulate(&cfg).unwrap();
    for t in &out.trials {
        assert!(t.entries.iter().all(|e| e.d_l2 < 1e-10));
    }
}

#[test]
fn gd_weight_at_truth_has_zero_moments() {
    let rows = cli::oracle_rows(
        gordonse::AlgorithmKind::GdPr,
        gordonse::StatePoint { alpha: 1.0, beta: 0.0 },
        0.0,
        20.0,
        0.5,
        20_000,
        1,
    )
    .unwrap();
    let moments: Vec<_> = rows.iter().filter(|r| r.quantity.starts_with("E[")).collect();
    assert_eq!(moments.len(), 3);
    assert!(moments.iter().all(|r| r.closed_form == 0.0 && r.mc_estimate == 0.0 && r.passes()));
    let pr_e2 = cli::oracle_rows(gordonse::AlgorithmKind::AmPr, gordonse::StatePoint { alpha: 0.6, beta: 0.8 }, 0.3, 20.0, 0.5, 20_000, 1)
        .unwrap();
    assert!((pr_e2[0].closed_form - 1.09).abs() < 1e-15);
}
