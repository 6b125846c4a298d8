use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, out: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_penergy"))
        .args(args)
        .arg("--out")
        .arg(dir.join(out))
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn summary(dir: &Path, out: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(out).join("summary.json")).unwrap()).unwrap()
}

#[test]
fn validate_form_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let pl = config(d, "pl.json", r#"{"seed": 1, "form": {"kind": "pl", "p": 2}, "trials": 50}"#);
    assert_eq!(code(&run(d, "pl", &["validate-form", "--config", &pl])), 0);
    let csv = fs::read_to_string(d.join("pl/assumptions.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap() == "id,status,worst_slack,tolerance,trials");
    assert!(csv.contains("\"trials\":50"));

    let graph = config(
        d,
        "graph.json",
        r#"{"seed": 1, "form": {"kind": "graph", "p": 3, "vertices": 3, "edges": [[0, 1, 1], [1, 2, 2]]}, "trials": 50}"#,
    );
    assert_eq!(code(&run(d, "graph", &["validate-form", "--config", &graph])), 0);
    let csv = fs::read_to_string(d.join("graph/assumptions.csv")).unwrap();
    let f4 = csv.lines().find(|l| l.starts_with("F4,")).unwrap();
    assert!(f4.contains("skipped: model deviation"), "{f4}");

    let bad_p = config(d, "bad.json", r#"{"seed": 1, "form": {"kind": "pl", "p": 0.5}}"#);
    assert_eq!(code(&run(d, "bad", &["validate-form", "--config", &bad_p])), 2);
    let unknown = config(d, "unknown.json", r#"{"seed": 1, "form": {"kind": "pl", "p": 2}, "extra": 0}"#);
    assert_eq!(code(&run(d, "unknown", &["validate-form", "--config", &unknown])), 2);
    let no_seed = config(d, "noseed.json", r#"{"form": {"kind": "pl", "p": 2}}"#);
    assert_eq!(code(&run(d, "noseed", &["validate-form", "--config", &no_seed])), 2);
    assert_eq!(code(&run(d, "seeded", &["validate-form", "--config", &no_seed, "--seed", "4"])), 0);
    assert_eq!(code(&run(d, "none", &["validate-form"])), 2);
}

#[test]
fn build_measure_examples() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let id = config(d, "id.json", r#"{"seed": 1, "p": 2, "function": {"kind": "identity"}}"#);
    assert_eq!(code(&run(d, "id", &["build-measure", "--config", &id, "--plot"])), 0);
    let s = summary(d, "id");
    assert!(s["gap"]["sup_rel"].as_f64().unwrap() <= 1e-4);
    assert!(fs::read_to_string(d.join("id/density.svg")).unwrap().starts_with("<svg"));
    let csv = fs::read_to_string(d.join("id/constructed.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("cell_lo,cell_hi,density"));
    assert_eq!(csv.lines().count(), 2 + 64);

    let tent = config(
        d,
        "tent.json",
        r#"{"seed": 1, "p": 3, "function": {"kind": "tent", "center": 0.5, "height": 0.5}, "resolution": 32}"#,
    );
    assert_eq!(code(&run(d, "tent", &["build-measure", "--config", &tent])), 0);
    assert!(summary(d, "tent")["gap"]["sup_rel"].as_f64().unwrap() <= 1e-4);

    let flat = config(d, "flat.json", r#"{"seed": 1, "p": 2, "function": {"kind": "constant", "value": 3}}"#);
    assert_eq!(code(&run(d, "flat", &["build-measure", "--config", &flat])), 0);
    let csv = fs::read_to_string(d.join("flat/constructed.csv")).unwrap();
    assert!(csv.lines().skip(2).all(|l| l.ends_with(",0e0")));

    let strict = config(
        d,
        "strict.json",
        r#"{"seed": 1, "p": 2, "function": {"kind": "sampled", "trial": 3}, "gap_tolerance": 0}"#,
    );
    assert_eq!(code(&run(d, "strict", &["build-measure", "--config", &strict])), 1);

    let short = config(
        d,
        "short.json",
        r#"{"seed": 1, "p": 2, "function": {"kind": "sampled", "trial": 3}, "schedule": {"n_max": 6}}"#,
    );
    assert_eq!(code(&run(d, "short", &["build-measure", "--config", &short])), 3);
    let trace = fs::read_to_string(d.join("short/nonconvergent_trace.csv")).unwrap();
    assert_eq!(trace.lines().nth(1), Some("n,energy,inf_so_far,ramp"));

    let bad_sched = config(
        d,
        "sched.json",
        r#"{"seed": 1, "p": 2, "function": {"kind": "identity"}, "schedule": {"n_min": 9, "n_max": 5}}"#,
    );
    assert_eq!(code(&run(d, "sched", &["build-measure", "--config", &bad_sched])), 2);
}

#[test]
fn check_laws_suite_and_replay() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let full = config(d, "full.json", r#"{"seed": 11, "p": 2, "trials": 6}"#);
    assert_eq!(code(&run(d, "a", &["check-laws", "--config", &full])), 0);
    assert_eq!(code(&run(d, "b", &["check-laws", "--config", &full, "--jobs", "1"])), 0);
    for name in ["laws.csv", "summary.csv"] {
        let a = fs::read(d.join("a").join(name)).unwrap();
        let b = fs::read(d.join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    let laws = fs::read_to_string(d.join("a/laws.csv")).unwrap();
    assert_eq!(laws.lines().nth(1), Some("law,source,trial,slack,pass"));
    assert_eq!(laws.lines().count(), 2 + 16 * 6);

    assert_eq!(code(&run(d, "c", &["check-laws", "--config", &full, "--seed", "12"])), 0);
    assert_ne!(
        fs::read(d.join("a/laws.csv")).unwrap(),
        fs::read(d.join("c/laws.csv")).unwrap()
    );

    let crossed = config(
        d,
        "crossed.json",
        r#"{"seed": 1, "p": 2, "weight": [[0, 0.5, 2], [0.5, 1, 1]],
            "upper_weight": [[0, 0.5, 0.5], [0.5, 1, 3]], "laws": ["domination"]}"#,
    );
    let o = run(d, "crossed", &["check-laws", "--config", &crossed]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("precondition"));

    let unknown = config(d, "unknown.json", r#"{"seed": 1, "p": 2, "laws": ["nope"]}"#);
    assert_eq!(code(&run(d, "unknown", &["check-laws", "--config", &unknown])), 2);

    let construction = config(
        d,
        "construction.json",
        r#"{"seed": 3, "p": 3, "trials": 2, "source": {"kind": "construction", "schedule": {"rel_tol": 1e-9}},
            "laws": ["total_mass", "locality", "clarkson"]}"#,
    );
    assert_eq!(code(&run(d, "construction", &["check-laws", "--config", &construction])), 0);
}

#[test]
fn ks_energy_scans() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = ["ks-energy", "--seed", "1", "--n", "2000", "--p", "2", "--r-list", "0.08,0.04,0.02"];
    assert_eq!(code(&run(d, "lin", &[&args[..], &["--profile", "linear", "--plot"]].concat())), 0);
    let csv = fs::read_to_string(d.join("lin/ks_scan.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("r,J,sup_so_far"));
    assert_eq!(csv.lines().count(), 2 + 3);
    let s = summary(d, "lin");
    assert!((s["extrapolated"].as_f64().unwrap() - 1.0 / 3.0).abs() < 0.02 / 3.0);
    assert!(!s["divergent"].as_bool().unwrap());
    assert!(fs::read_to_string(d.join("lin/ks_scan.svg")).unwrap().contains("<polyline"));

    assert_eq!(code(&run(d, "lin2", &[&args[..], &["--profile", "linear"]].concat())), 0);
    assert_eq!(
        fs::read(d.join("lin/ks_scan.csv")).unwrap(),
        fs::read(d.join("lin2/ks_scan.csv")).unwrap()
    );

    assert_eq!(code(&run(d, "step", &[&args[..], &["--profile", "step"]].concat())), 0);
    assert!(summary(d, "step")["divergent"].as_bool().unwrap());

    let values: String = (0..2000).map(|i| format!("{}\n", (i as f64 + 0.5) / 2000.0)).collect();
    let file = config(d, "values.txt", &values);
    let o = run(d, "file", &[&args[..], &["--profile", "file", "--profile-file", &file]].concat());
    assert_eq!(code(&o), 0);
    let column = |out: &str| -> Vec<f64> {
        fs::read_to_string(d.join(out).join("ks_scan.csv"))
            .unwrap()
            .lines()
            .skip(2)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    for (a, b) in column("file").iter().zip(column("lin")) {
        assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
    }

    let o = run(d, "floor", &["ks-energy", "--seed", "1", "--n", "100", "--r-list", "0.01,0.005"]);
    assert_eq!(code(&o), 2);
    let o = run(d, "noseed", &["ks-energy", "--n", "100"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sg_renorm_table() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = config(d, "sg.json", r#"{"seed": 0, "p_list": [2, 3]}"#);
    assert_eq!(code(&run(d, "sg", &["sg-renorm", "--config", &cfg])), 0);
    let csv = fs::read_to_string(d.join("sg/rho.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    assert_eq!(lines.next(), Some("p,rho,residual,iterations,shape_deviation"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[1] - 5.0 / 3.0).abs() <= 1e-8);
    assert!(row[2] <= 1e-8);
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(row[2] <= 1e-6);

    let empty = config(d, "empty.json", r#"{"seed": 0, "p_list": []}"#);
    assert_eq!(code(&run(d, "empty", &["sg-renorm", "--config", &empty])), 2);
}
