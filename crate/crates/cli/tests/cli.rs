use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nlw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlw"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn nlw")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn summary(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const GAUSSIAN: &str = "\
# cubic bump
params.p = 3
params.kappa = 0.6
grid.h = 1/64
grid.t_max = 8
initial.family = gaussian
initial.amplitude = 0.5
initial.center = 3
initial.width = 1/2
monitors.triangles = 1:2, 2:1
monitors.snapshot_stride = 64
checks.enabled = drift, additivity, monotonicity, triangles, pointwise, morawetz
";

fn write_config(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn zero_data_run_writes_an_all_zero_ledger() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "zero.cfg", "params.p = 3\ngrid.h = 1/16\ngrid.t_max = 2\nmonitors.radii = 0.5, 0.5t\n");
    let out = nlw(tmp.path(), &["run", "zero.cfg", "--out", "z", "--quiet"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ledger = fs::read_to_string(tmp.path().join("z/ledger.csv")).unwrap();
    let mut lines = ledger.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,E_total,E_minus,E_plus,xi,E[r=0.5],E_minus[r=0.5],E_plus[r=0.5],E[r=0.5t],E_minus[r=0.5t],E_plus[r=0.5t]"
    );
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() >= 2);
    for row in rows {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 11);
        assert!(vals[1..].iter().all(|v| *v == 0.0));
    }
    let s = summary(&tmp.path().join("z/summary.json"));
    assert_eq!(s["schema"], "nlw-summary/1");
    assert_eq!(s["passed"], true);
    assert_eq!(s["config"]["params.p"], "3");
}

#[test]
fn config_errors_name_the_key() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "p6.cfg", "params.p = 6\ngrid.h = 1/16\ngrid.t_max = 1\n");
    let out = nlw(tmp.path(), &["run", "p6.cfg"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("params.p"), "{}", stderr(&out));

    write_config(tmp.path(), "typo.cfg", "params.p = 3\ngrid.h = 1/16\ngrid.t_max = 1\ngrid.hh = 2\n");
    let out = nlw(tmp.path(), &["run", "--config", "typo.cfg"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("grid.hh"));

    write_config(tmp.path(), "off.cfg", "params.p = 3\ngrid.h = 1/16\ngrid.t_max = 1\nmonitors.inward = 0.3\n");
    assert_eq!(code(&nlw(tmp.path(), &["run", "off.cfg"])), 2);
    assert_eq!(code(&nlw(tmp.path(), &["run", "missing.cfg"])), 2);
}

#[test]
fn truncated_data_is_a_numerical_error() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "leak.cfg",
        "params.p = 3\ngrid.h = 1/16\ngrid.t_max = 1\ngrid.boundary = outgoing\ngrid.r_max = 4\n\
         initial.family = gaussian\ninitial.center = 3\ninitial.width = 1\n",
    );
    let out = nlw(tmp.path(), &["run", "leak.cfg"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("boundary leak"));
}

#[test]
fn summaries_reproduce_except_timing() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "g.cfg", GAUSSIAN);
    for dir in ["a", "b"] {
        let out = nlw(tmp.path(), &["run", "g.cfg", "--out", dir, "--quiet"]);
        assert_eq!(code(&out), 0, "{}", stdout(&out));
    }
    let strip = |d: &str| {
        let mut s = summary(&tmp.path().join(d).join("summary.json"));
        s.as_object_mut().unwrap().remove("timing");
        s.as_object_mut().unwrap().remove("config");
        serde_json::to_string(&s).unwrap()
    };
    assert_eq!(strip("a"), strip("b"));
    let s = summary(&tmp.path().join("a/summary.json"));
    let checks = s["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 6);
    assert!(checks.iter().all(|c| c["status"] == "pass"));
    assert!(tmp.path().join("a/energy.svg").exists());
}

#[test]
fn verify_passes_clean_runs_and_catches_tampering() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "zero.cfg", "params.p = 3\ngrid.h = 1/16\ngrid.t_max = 2\n");
    write_config(tmp.path(), "g.cfg", GAUSSIAN);
    assert_eq!(code(&nlw(tmp.path(), &["run", "zero.cfg", "--out", "z", "--quiet"])), 0);
    assert_eq!(code(&nlw(tmp.path(), &["run", "g.cfg", "--out", "g", "--quiet"])), 0);
    assert_eq!(code(&nlw(tmp.path(), &["verify", "z"])), 0);
    assert_eq!(code(&nlw(tmp.path(), &["verify", "g"])), 0);

    let path = tmp.path().join("g/ledger.csv");
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let j = headers.iter().position(|h| h == "E_plus").unwrap();
    let rows: Vec<Vec<String>> = rdr
        .records()
        .map(|r| {
            let mut r: Vec<String> = r.unwrap().iter().map(String::from).collect();
            r[j] = format!("{:.15e}", 2.0 * r[j].parse::<f64>().unwrap());
            r
        })
        .collect();
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(&headers).unwrap();
    for r in rows {
        w.write_record(r).unwrap();
    }
    w.flush().unwrap();
    let out = nlw(tmp.path(), &["verify", "g", "--checks", "additivity"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL additivity"));

    assert_eq!(code(&nlw(tmp.path(), &["verify", "nowhere"])), 2);
}

#[test]
fn refinement_pair_reports_second_order_residuals() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "g.cfg", GAUSSIAN);
    write_config(tmp.path(), "f.cfg", &GAUSSIAN.replace("grid.h = 1/64", "grid.h = 1/128"));
    assert_eq!(code(&nlw(tmp.path(), &["run", "g.cfg", "--out", "coarse", "--quiet"])), 0);
    assert_eq!(code(&nlw(tmp.path(), &["run", "f.cfg", "--out", "fine", "--quiet"])), 0);
    let out = nlw(tmp.path(), &["verify", "coarse", "fine", "--checks", "triangles"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let line = stdout(&out).lines().find(|l| l.contains("refinement")).unwrap().to_string();
    let ratio: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(ratio >= 3.0, "{line}");
}

fn sweep_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn h_sweep_shows_second_order_drift() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "g.cfg", &GAUSSIAN.replace("checks.enabled = drift, ", "checks.enabled = "));
    let out = Command::new(env!("CARGO_BIN_EXE_nlw"))
        .current_dir(tmp.path())
        .env("NLW_THREADS", "2")
        .args(["sweep", "--config", "g.cfg", "--axis", "grid.h = 1/32, 1/64, 1/128", "--out", "sw", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let rows = sweep_rows(&tmp.path().join("sw/sweep.csv"));
    assert_eq!(rows.len(), 3);
    for row in &rows[1..] {
        let order: f64 = row[4].parse().unwrap();
        assert!(order >= 1.9, "{row:?}");
    }
    assert!(tmp.path().join("sw/job_002/summary.json").exists());
}

#[test]
fn kappa_sweep_exponents_are_monotone() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "g.cfg", GAUSSIAN);
    let out = nlw(tmp.path(), &["sweep", "--config", "g.cfg", "--axis", "params.kappa = 0.3:0.9:0.3", "--out", "sk", "--quiet"]);
    assert_eq!(code(&out), 0);
    let rows = sweep_rows(&tmp.path().join("sk/sweep.csv"));
    let exps: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert_eq!(exps.len(), 3);
    assert!(exps.windows(2).all(|w| w[1] <= w[0]) || exps.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn single_point_sweep_matches_run() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "g.cfg", GAUSSIAN);
    assert_eq!(code(&nlw(tmp.path(), &["run", "g.cfg", "--out", "r", "--quiet"])), 0);
    assert_eq!(code(&nlw(tmp.path(), &["sweep", "--config", "g.cfg", "--axis", "grid.h = 1/64", "--out", "s", "--quiet"])), 0);
    let a = fs::read_to_string(tmp.path().join("r/ledger.csv")).unwrap();
    let b = fs::read_to_string(tmp.path().join("s/job_000/ledger.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn failed_sweep_job_sets_the_exit_code() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "g.cfg", GAUSSIAN);
    let out = nlw(tmp.path(), &["sweep", "--config", "g.cfg", "--axis", "params.p = 3, 6", "--out", "s", "--quiet"]);
    assert_eq!(code(&out), 2);
    let rows = sweep_rows(&tmp.path().join("s/sweep.csv"));
    assert_eq!(rows[0][2], "0");
    assert_eq!(rows[1][2], "2");
    assert!(rows[1][6].contains("params.p"));
}

#[test]
fn fit_recovers_a_power_law() {
    let tmp = TempDir::new().unwrap();
    let mut text = String::from("t,y\n");
    for k in 1..=20 {
        let t = k as f64;
        text.push_str(&format!("{t},{}\n", 3.0 * t.powf(-0.75)));
    }
    fs::write(tmp.path().join("d.csv"), text).unwrap();
    let out = nlw(tmp.path(), &["fit", "d.csv", "--column", "y", "--window", "2:16"]);
    assert_eq!(code(&out), 0);
    let exp: f64 = stdout(&out).lines().next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((exp + 0.75).abs() < 1e-9);
    assert_eq!(code(&nlw(tmp.path(), &["fit", "d.csv", "--column", "z"])), 2);
}

#[test]
fn tabulated_data_match_the_named_family() {
    let tmp = TempDir::new().unwrap();
    let h = 1.0 / 16.0;
    // causal grid for support 7 and t_max 2: r_max = 9 + 4h
    let n = ((9.0 / h) as usize) + 5;
    let mut table = String::from("u0,u1\n");
    for i in 0..n {
        let x = (i as f64 * h - 3.0) / 0.5;
        table.push_str(&format!("{:e},0\n", 0.5 * (-x * x).exp()));
    }
    fs::write(tmp.path().join("data.csv"), table).unwrap();
    let common = "params.p = 3\ngrid.h = 1/16\ngrid.t_max = 2\noutput.svg = false\nchecks.enabled = additivity\n";
    write_config(
        tmp.path(),
        "named.cfg",
        &format!("{common}initial.family = gaussian\ninitial.amplitude = 0.5\ninitial.center = 3\ninitial.width = 0.5\n"),
    );
    write_config(
        tmp.path(),
        "table.cfg",
        &format!("{common}initial.family = tabulated\ninitial.file = data.csv\ngrid.r_max = {}\n", (n - 1) as f64 * h),
    );
    assert_eq!(code(&nlw(tmp.path(), &["run", "named.cfg", "--out", "a", "--quiet"])), 0);
    let out = nlw(tmp.path(), &["run", "table.cfg", "--out", "b", "--quiet"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let e = |d: &str| summary(&tmp.path().join(d).join("summary.json"))["energy"]["initial"].as_f64().unwrap();
    assert!((e("a") - e("b")).abs() <= 1e-12 * e("a"));
}

#[test]
fn appendix_shortcut_reports_five_items() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "small.cfg", "grid.h = 1/16\ngrid.t_max = 16\nappendix.iterations = 3\n");
    let out = nlw(tmp.path(), &["appendix", "--config", "small.cfg", "--out", "ap"]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    let s = summary(&tmp.path().join("ap/summary.json"));
    let names: Vec<&str> = s["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 5);
    assert_eq!(names[0], "K finite");
    assert!(s["bisection"]["threshold"].as_f64().unwrap() > 0.05);
    assert_eq!(s["config"]["params.p"], "4");
    for svg in ["lp_tail.svg", "exterior.svg", "decay.svg", "defect.svg", "envelope.svg"] {
        assert!(tmp.path().join("ap").join(svg).exists());
    }
}
