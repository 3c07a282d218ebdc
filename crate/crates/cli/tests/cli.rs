use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmpc")).args(args).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_fails(out: &Output, code: i32, kind: &str) {
    assert_eq!(out.status.code(), Some(code));
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error[")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error[{kind}]: ")), "{err}");
}

#[test]
fn plan_single_waypoint_is_bang_bang() {
    let dir = tempfile::tempdir().unwrap();
    let out = pmpc(&["plan", "hover10m", "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let plan = read_json(&dir.path().join("plan.json"));
    let q = &plan["quads"][0];
    // Rest to rest over 10 m at the default x acceleration of 10 m/s².
    let expected = 2.0 * (10.0f64 / 10.0).sqrt();
    assert!((q["total_time"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert_eq!(q["waypoint_velocities"].as_array().unwrap().len(), 1);
    assert!(plan["collision_time"].is_null());
    let csv = fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let px: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!((px - 10.0).abs() < 1e-6);
}

#[test]
fn plan_head_on_collides_at_half_time() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("head_on.toml");
    fs::write(
        &scn,
        r#"
name = "head_on"

[[quads]]
position = [-2.0, 0.0, 1.0]
waypoints = [{ position = [2.0, 0.0, 1.0], stop = true }]

[[quads]]
position = [2.0, 0.0, 1.0]
waypoints = [{ position = [-2.0, 0.0, 1.0], stop = true }]
"#,
    )
    .unwrap();
    let out = pmpc(&["plan", scn.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan: Value = serde_json::from_slice(&out.stdout).unwrap();
    let total = plan["quads"][0]["total_time"].as_f64().unwrap();
    let tc = plan["collision_time"].as_f64().unwrap();
    assert!((tc - total / 2.0).abs() <= 0.03, "t_c {tc}, T {total}");
}

#[test]
fn run_exports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = pmpc(&["run", "hover10m", "-o", dir.path().to_str().unwrap()]);
        assert!(out.status.success());
    }
    for file in ["trajectory.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let summary = read_json(&a.path().join("summary.json"));
    let lap = summary["lap_time"].as_f64().unwrap();
    assert!((1.6..=2.3).contains(&lap), "{lap}");
    assert!(summary.get("solve_time").is_none());
    let csv = fs::read_to_string(a.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + summary["steps"].as_u64().unwrap() as usize);
}

#[test]
fn benchmark_reports_distribution() {
    let out = pmpc(&["benchmark", "hover10m"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("median") && text.contains("p95"), "{text}");
}

#[test]
fn run_with_timing_fills_solve_times() {
    let dir = tempfile::tempdir().unwrap();
    let out = pmpc(&["run", "hover10m", "--benchmark", "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(summary["solve_time"]["median_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn failures_have_codes() {
    assert_fails(&pmpc(&["run", "/nonexistent/scenario.toml"]), 4, "io");

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    assert_fails(&pmpc(&["plan", empty.to_str().unwrap()]), 2, "parse");

    let bad_rate = dir.path().join("bad_rate.toml");
    fs::write(
        &bad_rate,
        "name = \"x\"\n[model]\nrate_max = [-1.0, 3.0, 3.0]\n[[quads]]\nposition = [0.0, 0.0, 1.0]\n",
    )
    .unwrap();
    let out = pmpc(&["run", bad_rate.to_str().unwrap()]);
    assert_fails(&out, 2, "parse");
    assert!(String::from_utf8_lossy(&out.stderr).contains("ω_max > 0"));

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "name = \"x\"\nspeed = 3\n[[quads]]\nposition = [0.0, 0.0, 1.0]\n").unwrap();
    assert_fails(&pmpc(&["plan", unknown.to_str().unwrap()]), 2, "parse");

    let out_file = dir.path().join("occupied");
    fs::write(&out_file, "").unwrap();
    assert_fails(&pmpc(&["plan", "hover10m", "-o", out_file.to_str().unwrap()]), 4, "io");
}
