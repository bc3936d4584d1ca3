use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stfrontier"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

fn simulate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = p(dir, name);
    let mut args = vec!["simulate", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn simulate_writes_n_times_t_rows_with_provenance() {
    let dir = TempDir::new().unwrap();
    let scenario = p(&dir, "scenario.json");
    fs::write(&scenario, r#"{"n_units": 7, "n_periods": 5, "seed": 11}"#).unwrap();
    let out = simulate(&dir, "panel.csv", &["--scenario", s(&scenario)]);
    assert_eq!(data_rows(&out).len(), 35);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# stfrontier "));
    assert!(text.contains("# seed: 11"));
    assert!(text.contains("# command: stfrontier simulate"));
}

#[test]
fn summary_line_reports_seed() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "panel.csv");
    let o = run(&["simulate", "--n-units", "5", "--n-periods", "4", "--out", s(&out)]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("(seed 0)"), "{stdout}");
}

#[test]
fn estimate_writes_report_and_efficiencies() {
    let dir = TempDir::new().unwrap();
    let panel = simulate(&dir, "panel.csv", &["--n-units", "30", "--n-periods", "8", "--seed", "2"]);
    let report = p(&dir, "est.json");
    let te = p(&dir, "te.csv");
    let o = run(&["estimate", "--input", s(&panel), "--out", s(&report), "--te-out", s(&te)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&te);
    assert_eq!(rows.len(), 240);
    let lo = (-1.0f64).exp();
    for row in rows {
        let v: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v > lo && v < 1.0, "{v}");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["run"]["tool"], "stfrontier");
    assert_eq!(json["estimation"]["frontier"]["beta_hat"].as_array().unwrap().len(), 2);
}

#[test]
fn test_reports_include_intervals_and_exit_codes() {
    let dir = TempDir::new().unwrap();
    let panel = simulate(
        &dir,
        "panel.csv",
        &["--n-units", "40", "--n-periods", "12", "--fraction", "0.2", "--spatial-shift", "1.5", "--seed", "5"],
    );
    let out = p(&dir, "spatial.json");
    let o = run(&["test", "spatial", "--input", s(&panel), "--out", s(&out), "--boot-k", "200", "--seed", "1"]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let report = &json["report"];
    assert_eq!(report["per_block_interval"].as_array().unwrap().len(), 12);
    let reject = report["reject"].as_bool().unwrap();
    assert!(reject);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json["run"]["seed"], 1);

    let out2 = p(&dir, "temporal.json");
    let o = run(&["test-temporal", "--input", s(&panel), "--out", s(&out2), "--boot-k", "200"]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out2).unwrap()).unwrap();
    let expected = if json["report"]["reject"].as_bool().unwrap() { 3 } else { 0 };
    assert_eq!(o.status.code(), Some(expected));
    assert_eq!(json["report"]["per_block_interval"].as_array().unwrap().len(), 40);
}

#[test]
fn spatial_test_accepts_efficiency_file() {
    let dir = TempDir::new().unwrap();
    let panel = simulate(&dir, "panel.csv", &["--n-units", "25", "--n-periods", "6", "--seed", "9"]);
    let te = p(&dir, "te.csv");
    run(&["estimate", "--input", s(&panel), "--out", s(&p(&dir, "e.json")), "--te-out", s(&te)]);
    let out = p(&dir, "r.json");
    let o = run(&["test-spatial", "--input", s(&panel), "--te", s(&te), "--out", s(&out), "--boot-k", "100"]);
    assert!(matches!(o.status.code(), Some(0) | Some(3)));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["report"]["block_labels"][0], "1");
}

#[test]
fn reruns_are_identical_and_inputs_untouched() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.csv", &["--n-units", "20", "--n-periods", "10", "--seed", "3"]);
    let b = p(&dir, "b.csv");
    run(&["simulate", "--n-units", "20", "--n-periods", "10", "--seed", "3", "--out", s(&b)]);
    let body = |path: &Path| data_rows(path);
    assert_eq!(body(&a), body(&b));

    let before = fs::read(&a).unwrap();
    let r1 = p(&dir, "r.json");
    let args = ["test", "temporal", "--input", s(&a), "--out", s(&r1), "--boot-k", "150", "--seed", "8"];
    run(&args);
    let first = fs::read(&r1).unwrap();
    run(&args);
    assert_eq!(first, fs::read(&r1).unwrap());
    assert_eq!(before, fs::read(&a).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let panel = simulate(&dir, "panel.csv", &["--n-units", "20", "--n-periods", "10", "--seed", "4"]);
    let one = p(&dir, "one.json");
    let many = p(&dir, "many.json");
    let o1 = run(&["--threads", "1", "test", "spatial", "--input", s(&panel), "--out", s(&one), "--boot-k", "120"]);
    let o2 = bin()
        .env("RAYON_NUM_THREADS", "3")
        .args(["test", "spatial", "--input", s(&panel), "--out", s(&many), "--boot-k", "120"])
        .output()
        .unwrap();
    assert_eq!(o1.status.code(), o2.status.code());
    let strip = |path: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        v["run"]["command"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&one), strip(&many));
}

#[test]
fn data_errors_exit_one_with_context() {
    let dir = TempDir::new().unwrap();
    let bad = p(&dir, "bad.csv");
    fs::write(&bad, "unit,period,y,x1,w1\n1,1,1.5,1.0,0.1\n1,2,-2,1.0,0.2\n1,3,1.5,1.0,0.3\n").unwrap();
    let o = run(&["estimate", "--input", s(&bad), "--out", s(&p(&dir, "x.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("row 3") && err.contains("output must be positive"), "{err}");

    fs::write(&bad, "unit,period,y,x1,w1,colour\n1,1,1.5,1.0,0.1,red\n").unwrap();
    let o = run(&["estimate", "--input", s(&bad), "--out", s(&p(&dir, "x.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("colour"));

    let mut text = String::from("unit,period,y,x1,w1\n");
    for u in 1..=4 {
        for t in 1..=8 {
            if (u, t) != (3, 7) {
                text.push_str(&format!("{u},{t},1.5,{},0.{u}\n", 1.0 + t as f64));
            }
        }
    }
    fs::write(&bad, text).unwrap();
    let o = run(&["estimate", "--input", s(&bad), "--out", s(&p(&dir, "x.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("unit 3") && err.contains("period 7"), "{err}");
    assert!(!p(&dir, "x.json").exists());
}

#[test]
fn numerical_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    let csv = p(&dir, "collinear.csv");
    let mut text = String::from("unit,period,y,x1,x2,w1\n");
    for u in 1..=5 {
        for t in 1..=6 {
            let x = 1.0 + ((u * 7 + t * 3) % 5) as f64;
            text.push_str(&format!("{u},{t},{},{x},{x},{}\n", 1.0 + (u + t) as f64 * 0.1, u as f64 * 0.2));
        }
    }
    fs::write(&csv, text).unwrap();
    let o = run(&["estimate", "--input", s(&csv), "--out", s(&p(&dir, "x.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("x2"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["estimate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let dir = TempDir::new().unwrap();
    let panel = simulate(&dir, "panel.csv", &["--n-units", "5", "--n-periods", "6"]);
    let o = run(&["test", "temporal", "--input", s(&panel), "--out", s(&p(&dir, "r.json")), "--boot-k", "50"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn power_writes_table_csv() {
    let dir = TempDir::new().unwrap();
    let grid = p(&dir, "grid.json");
    fs::write(
        &grid,
        r#"{"n_units": [12], "n_periods": [12], "dominance": ["Equal"], "fractions": [0.2], "shifts": [1.0], "n_reps": 3}"#,
    )
    .unwrap();
    let out = p(&dir, "power.csv");
    let o = run(&["power", "--grid", s(&grid), "--out", s(&out), "--boot-k", "100", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# seed: 5"));
    assert!(text.contains("test,n,T,dominance,fraction,shift,reps,rejections,rate"));
    assert_eq!(data_rows(&out).len(), 4);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("temporal test") && stdout.contains("(seed 5)"));
}

#[test]
fn null_panels_rarely_reject_temporal() {
    // 40 independent null panels at the default size; a test holding its
    // 5% level rejects on roughly two of them
    let dir = TempDir::new().unwrap();
    let mut rejections = 0;
    for seed in 0..40u64 {
        let seed = seed.to_string();
        let panel = simulate(&dir, "null.csv", &["--seed", &seed]);
        let o = run(&["test-temporal", "--input", s(&panel), "--out", s(&p(&dir, "r.json")), "--seed", &seed]);
        match o.status.code() {
            Some(3) => rejections += 1,
            Some(0) => {}
            other => panic!("unexpected exit {other:?}: {}", String::from_utf8_lossy(&o.stderr)),
        }
    }
    println!("temporal rejections on 40 null panels: {rejections}");
    assert!(rejections <= 7, "{rejections} of 40 null panels rejected");
}
