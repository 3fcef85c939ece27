use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn run(cmd: &str, dir: &Path, config: &str) -> (i32, PathBuf) {
    let path = dir.join(format!("{cmd}.json"));
    std::fs::write(&path, config).unwrap();
    let out = dir.join(format!("{cmd}-out"));
    let status = Command::new(env!("CARGO_BIN_EXE_dichotomy"))
        .args([cmd, "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (status.status.code().unwrap(), out)
}

fn diag_config(extra: &str) -> String {
    format!(r#"{{"system": {{"builtin": "const_diag"}}, "grid": {{"t_min": -12, "t_max": 12, "h": 0.01}}{extra}}}"#)
}

/// Rows `(t, u, residual)` of solution.csv.
fn read_solution(out: &Path) -> Vec<(f64, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(out.join("solution.csv")).unwrap();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            let nums: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
            (nums[0], nums[1..nums.len() - 1].to_vec())
        })
        .collect()
}

#[test]
fn analyze_diag_reports_bound() {
    let dir = TempDir::new().unwrap();
    let (code, out) = run("analyze", dir.path(), &diag_config(""));
    assert_eq!(code, 0);
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    let line = report.lines().find(|l| l.starts_with("inverse bound")).unwrap();
    let value: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!((value - 2.0).abs() <= 0.1, "{line}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("dichotomy.json")).unwrap()).unwrap();
    assert_eq!(json["verdict"], "dichotomic");
    assert!(out.join("growth.json").exists());
}

#[test]
fn analyze_shear_is_not_certified() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"system": {"builtin": "no_dichotomy_shear"}, "grid": {"t_min": -8, "t_max": 8, "h": 0.02}}"#;
    let (code, _) = run("analyze", dir.path(), config);
    assert!(code == 2 || code == 3, "exit {code}");
}

#[test]
fn missing_system_file_exits_one() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"system": {"file": "does-not-exist.csv"}, "grid": {"t_min": -4, "t_max": 4, "h": 0.01}}"#;
    assert_eq!(run("analyze", dir.path(), config).0, 1);
    assert_eq!(run("solve", dir.path(), "{ not json").0, 1);
}

#[test]
fn solve_constant_forcing() {
    let dir = TempDir::new().unwrap();
    let (code, out) = run("solve", dir.path(), &diag_config(r#", "forcing": "const:1,1""#));
    assert_eq!(code, 0);
    let rows = read_solution(&out);
    assert!(!rows.is_empty());
    for (t, u) in rows.iter().filter(|(t, _)| t.abs() <= 3.0) {
        assert!((u[0] - 1.0).abs() < 1e-3 && (u[1] + 1.0).abs() < 1e-3, "t = {t}: {u:?}");
    }
}

#[test]
fn solve_zero_forcing_is_zero() {
    let dir = TempDir::new().unwrap();
    let (code, out) = run("solve", dir.path(), &diag_config(r#", "forcing": "const:0,0""#));
    assert_eq!(code, 0);
    assert!(read_solution(&out).iter().all(|(_, u)| u.iter().all(|&x| x == 0.0)));
}

#[test]
fn solve_cosine_matches_closed_form() {
    // x' = −x + cos t has bounded solution (cos t + sin t)/2
    let dir = TempDir::new().unwrap();
    let (code, out) = run("solve", dir.path(), &diag_config(r#", "forcing": "sin:1""#));
    assert_eq!(code, 0);
    for (t, u) in read_solution(&out).iter().filter(|(t, _)| t.abs() <= 3.0) {
        assert!((u[0] - 0.5 * (t.cos() + t.sin())).abs() < 1e-3, "t = {t}");
        assert!(u[1].abs() < 1e-12);
    }
}

#[test]
fn solve_on_shear_exits_two() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"system": {"builtin": "no_dichotomy_shear"}, "grid": {"t_min": -8, "t_max": 8, "h": 0.02}, "forcing": "const:1,1"}"#;
    let (code, out) = run("solve", dir.path(), config);
    assert_eq!(code, 2);
    assert!(!out.join("solution.csv").exists());
}

#[test]
fn perturb_matrix_directions() {
    let dir = TempDir::new().unwrap();
    let ok = diag_config(r#", "perturbation": {"kind": "matrix", "matrix": [[1, 0], [0, -1]], "amplitude": 0.4}"#);
    let (code, out) = run("perturb", dir.path(), &ok);
    assert_eq!(code, 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("perturb.json")).unwrap()).unwrap();
    assert_eq!(json["admissible"], true);
    assert_eq!(json["perturbed"]["verdict"], "dichotomic");
    assert!(json["certified"].is_object());

    let far = diag_config(r#", "perturbation": {"kind": "matrix", "matrix": [[1, 0], [0, -1]], "amplitude": 0.6}"#);
    let (_, out) = run("perturb", dir.path(), &far);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("perturb.json")).unwrap()).unwrap();
    assert_eq!(json["admissible"], false);
    assert!(json["certified"].is_null());
}

#[test]
fn sweep_below_threshold_all_dichotomic() {
    let dir = TempDir::new().unwrap();
    let config =
        diag_config(r#", "perturbation": {"kind": "matrix", "matrix": [[1, 0], [0, -1]]}, "amplitudes": [0.1, 0.2, 0.3, 0.4, 0.49]"#);
    let (code, out) = run("sweep", dir.path(), &config);
    assert_eq!(code, 0);
    let mut reader = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert_eq!(&r[3], "true");
        assert_eq!(&r[4], "dichotomic");
    }
}

#[test]
fn sampled_system_file() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("# diag(-1, 2)\nt,a11,a12,a21,a22\n");
    for k in 0..=40 {
        text.push_str(&format!("{},-1,0,0,2\n", -10.0 + 0.5 * k as f64));
    }
    std::fs::write(dir.path().join("sys.csv"), text).unwrap();
    let config = r#"{"system": {"file": "sys.csv"}, "grid": {"t_min": -8, "t_max": 8, "h": 0.01}}"#;
    let (code, out) = run("analyze", dir.path(), config);
    assert_eq!(code, 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("dichotomy.json")).unwrap()).unwrap();
    let bound = json["inverse_bound"].as_f64().unwrap();
    assert!((bound - 1.5).abs() < 0.05, "{bound}");
}

#[test]
fn csv_floats_round_trip() {
    let dir = TempDir::new().unwrap();
    let (_, out) = run("solve", dir.path(), &diag_config(r#", "forcing": "sin:1""#));
    let text = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    for field in text.lines().skip(1).take(50).flat_map(|l| l.split(',')) {
        let x: f64 = field.parse().unwrap();
        assert_eq!(dichotomy_kit::cli::fmt_float(x), field);
    }
}
