use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bridge-stop"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) {
    let o = run(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_boundary(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,b"));
    lines
        .map(|l| {
            let (t, b) = l.split_once(',').unwrap();
            (t.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

fn assert_valid(rows: &[(f64, f64)], pin_time: f64, h: f64) {
    assert_eq!(rows.last().unwrap().1, 0.0);
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1 + 10.0 * h * h));
    assert!(rows.iter().all(|(t, b)| *b >= (pin_time - t) / 2.0 - 1e-6));
}

#[test]
fn solve_defaults_writes_valid_boundary() {
    let dir = TempDir::new().unwrap();
    ok(&["solve"], dir.path());
    let rows = read_boundary(&dir.path().join("boundary.csv"));
    assert_eq!(rows.len(), 1001);
    assert_valid(&rows, 1.0, 1e-3);
    let report = json(&dir.path().join("solve_report.json"));
    assert_eq!(report["mesh"], 1e-3);
    assert_eq!(report["tolerance"], 1e-6);
    assert_eq!(report["method"], "picard");
    assert!(report["errors"].as_array().unwrap().last().unwrap().as_f64().unwrap() < 1e-6);
}

#[test]
fn backward_method_matches_picard() {
    let p = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(&["solve", "--mesh", "5e-3", "--tol", "1e-5"], p.path());
    ok(&["solve", "--method", "backward", "--mesh", "5e-3"], b.path());
    let picard = read_boundary(&p.path().join("boundary.csv"));
    let backward = read_boundary(&b.path().join("boundary.csv"));
    assert_valid(&backward, 1.0, 5e-3);
    let diff = picard.iter().zip(&backward).map(|(x, y)| (x.1 - y.1).abs()).fold(0.0, f64::max);
    assert!(diff <= 5e-3, "{diff}");
}

#[test]
fn longer_horizon_stays_above_the_line() {
    let dir = TempDir::new().unwrap();
    ok(&["solve", "--T", "5", "--mesh", "5e-3"], dir.path());
    let rows = read_boundary(&dir.path().join("boundary.csv"));
    assert_eq!(rows.last().unwrap().0, 5.0);
    assert_valid(&rows, 5.0, 5e-3);
}

#[test]
fn value_surface_from_boundary_file() {
    let dir = TempDir::new().unwrap();
    // the surface error next to the pin shrinks like √h; 5e-4 keeps it under 1e-3
    ok(&["solve", "--mesh", "5e-4"], dir.path());
    let boundary = dir.path().join("boundary.csv");
    ok(&["value", "--boundary", boundary.to_str().unwrap()], dir.path());
    let text = fs::read_to_string(dir.path().join("value_surface.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,v"));
    let rows: Vec<[f64; 3]> = lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|p| p.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    assert_eq!(rows.len(), 101 * 201);
    for [t, x, v] in rows {
        if t == 1.0 {
            assert_eq!(v, x.exp());
        } else {
            assert!(v >= x.exp().max(1.0) - 1e-3, "({t}, {x}): {v}");
        }
    }
}

#[test]
fn grid_format_has_one_row_per_time() {
    let dir = TempDir::new().unwrap();
    ok(&["--mesh", "5e-3", "value", "--format", "grid", "--dt", "0.1", "--dx", "0.5"], dir.path());
    let text = fs::read_to_string(dir.path().join("value_surface.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[0].split(',').count(), 6);
}

#[test]
fn simulate_is_deterministic_and_consistent() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["simulate", "--mesh", "5e-3", "--x0", "0.3", "--paths", "20000", "--seed", "7"];
    ok(&args, a.path());
    ok(&args, b.path());
    for name in ["path.csv", "simulate_report.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let path = fs::read_to_string(a.path().join("path.csv")).unwrap();
    let last: Vec<f64> = path.lines().last().unwrap().split(',').map(|p| p.parse().unwrap()).collect();
    assert_eq!(last, vec![1.0, 0.0]);

    let report = json(&a.path().join("simulate_report.json"));
    if let Some(tau) = report["hitting_time"].as_f64() {
        assert!(tau > 0.0 && tau <= 1.0);
    }
    let mc = &report["monte_carlo"];
    let (mean, se) = (mc["mean"].as_f64().unwrap(), mc["std_error"].as_f64().unwrap());
    let v = report["value"].as_f64().unwrap();
    // coarse grid: discrete monitoring plus the boundary's own error
    assert!((mean - v).abs() <= 3.0 * se + 1e-2, "{mean} ± {se} vs {v}");
}

#[test]
fn solve_and_value_are_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        ok(&["--mesh", "5e-3", "solve"], dir.path());
        ok(&["--mesh", "5e-3", "value", "--dt", "0.05", "--dx", "0.1"], dir.path());
    }
    for name in ["boundary.csv", "value_surface.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    // reports agree apart from wall-clock time
    let strip = |dir: &TempDir| {
        let mut v = json(&dir.path().join("solve_report.json"));
        v.as_object_mut().unwrap().remove("wall_time_ms");
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn fit_reports_ansatz_parameters() {
    let dir = TempDir::new().unwrap();
    ok(&["fit"], dir.path());
    let fit = json(&dir.path().join("fit.json"));
    assert_eq!(fit["T"], 1.0);
    assert!((fit["A"].as_f64().unwrap() + 2.09).abs() <= 0.2);
    assert!((fit["B"].as_f64().unwrap() - 0.40).abs() <= 0.05);
    assert!(fit["rmse"].as_f64().unwrap() < 1e-2);
}

#[test]
fn compare_reports_both_solvers() {
    let dir = TempDir::new().unwrap();
    ok(&["compare", "--mesh", "5e-3", "--tol", "1e-5"], dir.path());
    let r = json(&dir.path().join("compare.json"));
    assert!(r["sup_diff"].as_f64().unwrap() <= 5e-3);
    assert!(r["picard_iterations"].as_u64().unwrap().abs_diff(36) <= 8);
    assert_eq!(r["picard_valid"], true);
    assert_eq!(r["backward_valid"], true);
    assert!(r["picard_wall_time_ms"].as_f64().unwrap() > 0.0);
    assert!(r["backward_wall_time_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let code = |args: &[&str]| run(args, dir.path()).status.code();
    assert_eq!(code(&["solve", "--tol", "-1"]), Some(2));
    assert_eq!(code(&["solve", "--T", "0"]), Some(2));
    assert_eq!(code(&["solve", "--method", "newton"]), Some(2));
    assert_eq!(code(&["solve", "--max-iter", "3"]), Some(3));
    assert_eq!(code(&["fit", "--boundary", "/nonexistent/boundary.csv"]), Some(4));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,b\n0,1\n0.3,0.5\n1,0\n").unwrap();
    assert_eq!(code(&["fit", "--boundary", bad.to_str().unwrap()]), Some(2));
}
