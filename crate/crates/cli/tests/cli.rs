use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn scenario(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect()
}

fn cli(args: &[&str], scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cav-corridor"))
        .args(args)
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn column(csv: &str, idx: usize) -> Vec<f64> {
    rows(csv).iter().map(|r| r[idx].parse().unwrap()).collect()
}

#[test]
fn solve_writes_three_files_with_the_agreed_header() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["solve"], &scenario("case1.toml"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "vehicle_id,t,p,v,u,margin");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    let svg = fs::read_to_string(dir.path().join("plots.svg")).unwrap();
    assert!(svg.starts_with("<svg") && !svg.contains("href"));
}

#[test]
fn case1_ends_at_rest_acceleration() {
    let dir = TempDir::new().unwrap();
    assert!(cli(&["solve"], &scenario("case1.toml"), dir.path()).status.success());
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let last = rows(&csv).pop().unwrap();
    assert_eq!(last[1].parse::<f64>().unwrap(), 26.0);
    assert!(last[4].parse::<f64>().unwrap().abs() < 1e-9);
    assert!((last[2].parse::<f64>().unwrap() - 300.0).abs() < 1e-6);
}

#[test]
fn case4_margin_touches_zero() {
    let dir = TempDir::new().unwrap();
    assert!(cli(&["solve", "--dt", "0.01"], &scenario("case4.toml"), dir.path())
        .status
        .success());
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let rows = rows(&csv);
    let margin: Vec<f64> = rows
        .iter()
        .filter(|r| !r[5].is_empty())
        .map(|r| r[5].parse().unwrap())
        .collect();
    assert!(margin.len() > rows.len() / 2);
    let min = margin.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(min.abs() < 1e-6, "{min}");
}

#[test]
fn csv_columns_differentiate_consistently() {
    let dir = TempDir::new().unwrap();
    assert!(cli(&["solve", "--dt", "0.001"], &scenario("case3.toml"), dir.path())
        .status
        .success());
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let (t, p, v, u) = (column(&csv, 1), column(&csv, 2), column(&csv, 3), column(&csv, 4));
    for i in 1..t.len() - 2 {
        let h = t[i + 1] - t[i - 1];
        if h <= 0.0 || t[i + 1] - t[i] > 0.0011 {
            continue;
        }
        assert!(((p[i + 1] - p[i - 1]) / h - v[i]).abs() < 1e-3, "dp/dt at t = {}", t[i]);
        assert!(((v[i + 1] - v[i - 1]) / h - u[i]).abs() < 1e-3, "dv/dt at t = {}", t[i]);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        assert!(cli(
            &["simulate", "--mode", "baseline", "--seed", "3"],
            &scenario("corridor_4zone.toml"),
            dir.path()
        )
        .status
        .success());
    }
    for file in ["trajectory.csv", "events.jsonl", "report.json"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn seed_changes_values_not_schema() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let sc = scenario("corridor_4zone.toml");
    assert!(cli(&["simulate", "--mode", "baseline", "--seed", "1"], &sc, a.path())
        .status
        .success());
    assert!(cli(&["simulate", "--mode", "baseline", "--seed", "2"], &sc, b.path())
        .status
        .success());
    let ra: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("report.json")).unwrap()).unwrap();
    let rb: serde_json::Value = serde_json::from_slice(&fs::read(b.path().join("report.json")).unwrap()).unwrap();
    let keys = |v: &serde_json::Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&ra), keys(&rb));
    assert_eq!(keys(&ra["aggregates"]), keys(&rb["aggregates"]));
    assert_ne!(ra["aggregates"]["total_fuel"], rb["aggregates"]["total_fuel"]);
    let header = |d: &TempDir| {
        fs::read_to_string(d.path().join("trajectory.csv"))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_owned()
    };
    assert_eq!(header(&a), header(&b));
}

#[test]
fn malformed_scenario_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\n[corridor]\nlength = 300\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = cli(&["solve"], &bad, &out_dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn infeasible_schedule_exits_3() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(scenario("case1.toml"))
        .unwrap()
        .replace("terminal_time_s = 26.0", "terminal_time_s = 4.0");
    assert!(text.contains("terminal_time_s = 4.0"));
    let path = dir.path().join("tight.toml");
    fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = cli(&["solve"], &path, &out_dir);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn oracle_check_passes_on_case3() {
    let dir = TempDir::new().unwrap();
    let out = cli(&["oracle-check"], &scenario("case3.toml"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_check_fails_with_exit_4_when_tolerance_is_impossible() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(scenario("case3.toml")).unwrap();
    let text = if text.contains("oracle_rel") {
        text.lines()
            .map(|l| {
                if l.trim_start().starts_with("oracle_rel") {
                    "oracle_rel = 1e-15"
                } else {
                    l
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        format!("{text}\n[tolerances]\noracle_rel = 1e-15\n")
    };
    let path = dir.path().join("strict.toml");
    fs::write(&path, text).unwrap();
    let out = cli(&["oracle-check"], &path, dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
