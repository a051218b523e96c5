// Copyright 2026 The qpt Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qpt_core::cli::{CompareSummary, ReconstructionReport};
use qpt_core::qmatrix::MatrixJson;
use serde_json::Value;

fn qpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpt")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gate_prints_sqiswap_entries() {
    let o = qpt(&["gate", "sqiswap"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("+0.707107+0.000000i"));
    assert!(text.contains("+0.000000-0.707107i"));

    let o = qpt(&["gate", "sqiswap", "--json"]);
    let m: MatrixJson = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((m.rows, m.cols), (4, 4));

    let o = qpt(&["gate", "cnot"]);
    assert!(stdout(&o).contains("rotation convention exp(-i*alpha*sigma/2)"));
}

#[test]
fn unknown_subcommand_and_gate_exit_2() {
    assert_eq!(qpt(&["tomograph"]).status.code(), Some(2));
    assert_eq!(qpt(&["gate", "toffoli"]).status.code(), Some(2));
    assert_eq!(qpt(&["protocol", "show", "octahedron"]).status.code(), Some(2));
}

#[test]
fn physics_reports_expected_keys() {
    let o = qpt(&["physics", "--ic", "2e-6", "--ie", "1.9e-6", "--capacitance", "1e-12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["phi0", "omega_J", "omega_p", "levels"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["levels"].as_array().unwrap().len(), 4);
    let o = qpt(&["physics", "--ic", "2e-6", "--ie", "3e-6", "--capacitance", "1e-12"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn protocol_show_lists_design_rank() {
    let o = qpt(&["protocol", "show", "tetrahedron"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["design_rank"], 256);
}

#[test]
fn chi_export_writes_both_normalizations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chi");
    let o = qpt(&["chi", "export", "--gate", "sqiswap", "--p", "0.5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("chi.json")).unwrap()).unwrap();
    assert_eq!(v["S"], 4);
    assert_eq!(v["basis"], "pauli");
    let csv = fs::read_to_string(out.join("chi.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("normalization,part,row,II,IX"));
    assert_eq!(lines.len(), 1 + 4 * 16);
    assert!(!csv.contains('\r'));
    // Unit trace: the II-II entry of depolarized SQiSW.
    let unit: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
    let scaled: f64 = lines[1 + 32].split(',').nth(3).unwrap().parse().unwrap();
    assert!((scaled - 4.0 * unit).abs() < 1e-12);
}

#[test]
fn config_errors_exit_2_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("missing.json", r#"{"gate": "sqiswap", "noise_p": 0.5, "protocol": "tetrahedron"}"#, "shots"),
        ("p.json", r#"{"gate": "sqiswap", "noise_p": 1.5, "shots": 10}"#, "p must lie in [0,1]"),
        ("proto.json", r#"{"gate": "sqiswap", "protocol": "octahedron", "shots": 10}"#, "tetrahedron"),
        ("extra.json", r#"{"gate": "sqiswap", "shots": 10, "shot": 3}"#, "shot"),
        ("broken.json", "{\n  \"gate\": \"sqiswap\"\n  \"shots\": 10\n}", "line 3"),
    ];
    for (name, body, needle) in cases {
        let path = write_config(dir.path(), name, body);
        let o = qpt(&["reconstruct", "--config", &path]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
    let o = qpt(&["reconstruct", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_then_reconstruct_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.json",
        r#"{"gate": "sqiswap", "noise_p": 0.5, "protocol": "tetrahedron", "shots": 40000, "seed": 9}"#,
    );
    let counts = dir.path().join("counts.json");
    let o = qpt(&["simulate", "--config", &cfg, "--out", counts.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let from_file = qpt(&["reconstruct", "--config", &cfg, "--counts", counts.to_str().unwrap(), "--with-chi"]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    let r: ReconstructionReport = serde_json::from_str(&stdout(&from_file)).unwrap();
    assert_eq!(r.shots, 40_000);
    assert!(r.converged && r.tp_residual < 1e-6);
    assert!((r.fidelity + r.loss - 1.0).abs() < 1e-12);
    assert_eq!(r.chi.unwrap().rows, 16);

    // Sampling inside `reconstruct` uses the same seed, so the answers agree.
    let direct = qpt(&["reconstruct", "--config", &cfg]);
    let d: ReconstructionReport = serde_json::from_str(&stdout(&direct)).unwrap();
    assert_eq!(d.fidelity, r.fidelity);
}

#[test]
fn strict_turns_non_convergence_into_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.json",
        r#"{"gate": "sqiswap", "noise_p": 0.5, "protocol": "standard", "shots": 10000, "max_iterations": 2}"#,
    );
    let lenient = qpt(&["reconstruct", "--config", &cfg]);
    assert!(lenient.status.success());
    let r: ReconstructionReport = serde_json::from_str(&stdout(&lenient)).unwrap();
    assert!(!r.converged);
    assert_eq!(qpt(&["reconstruct", "--config", &cfg, "--strict"]).status.code(), Some(3));
}

#[test]
fn compare_writes_declared_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2");
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"gate": "sqiswap", "noise_p": 0.5, "shots": 20000, "runs": 4, "bins": 10, "output_dir": {:?}}}"#,
            out.to_str().unwrap()
        ),
    );
    let o = qpt(&["compare", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));

    let summary: CompareSummary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.runs, 4);
    assert!((summary.ratio - summary.mean_std / summary.mean_tet).abs() < 1e-12);
    assert!(summary.ci_low <= summary.ci_high);

    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    let mut lines = samples.lines();
    assert_eq!(lines.next(), Some("run,protocol,seed,F,dF,converged,iterations"));
    assert_eq!(lines.count(), 8);

    let density = fs::read_to_string(out.join("density.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        density.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 10);
    let width = 2.0 * rows[0][0];
    for col in [1, 2] {
        let integral: f64 = rows.iter().map(|r| r[col] * width).sum();
        assert!((integral - 1.0).abs() < 1e-9, "{integral}");
    }

    let single = write_config(dir.path(), "s.json", r#"{"gate": "sqiswap", "protocol": "standard", "runs": 1}"#);
    assert_eq!(qpt(&["compare", "--config", &single]).status.code(), Some(2));
}
