//! End-to-end tests of the `moeppi` command line.
//!
//! Golden files live in `tests/golden`; set `UPDATE_GOLDEN=1` to rewrite them.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("moeppi").chain(args.iter().copied());
    let code = moeppi_cli::run(argv, &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("missing golden {}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

/// Labeled and unlabeled CSVs with `y`, one covariate and two experts.
fn write_data(dir: &Path, n: usize, big_n: usize) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };
    let mut lab = String::from("y,x1,good,rough\n");
    for _ in 0..n {
        let x: f64 = gauss();
        let y = 1.0 + 2.0 * x + 0.5 * gauss();
        lab += &format!("{y},{x},{},{}\n", 1.0 + 2.0 * x + 0.1 * gauss(), y + gauss());
    }
    let mut unlab = String::from("x1,good,rough\n");
    for _ in 0..big_n {
        let x: f64 = gauss();
        let y = 1.0 + 2.0 * x + 0.5 * gauss();
        unlab += &format!("{x},{},{}\n", 1.0 + 2.0 * x + 0.1 * gauss(), y + gauss());
    }
    let (lp, up) = (dir.join("lab.csv"), dir.join("unlab.csv"));
    fs::write(&lp, lab).unwrap();
    fs::write(&up, unlab).unwrap();
    (lp, up)
}

#[test]
fn help_matches_golden() {
    for (name, args) in [
        ("help.txt", vec!["--help"]),
        ("help_estimate.txt", vec!["estimate", "--help"]),
        ("help_compare.txt", vec!["compare", "--help"]),
        ("help_simulate.txt", vec!["simulate", "--help"]),
        ("help_power.txt", vec!["power", "--help"]),
    ] {
        let r = run(&args);
        assert_eq!(r.code, 0, "{args:?}");
        check_golden(name, &r.stdout);
    }
}

#[test]
fn help_lists_every_flag() {
    let estimate = run(&["estimate", "--help"]).stdout;
    for flag in [
        "--labeled",
        "--unlabeled",
        "--response-col",
        "--covariate-cols",
        "--expert-cols",
        "--alpha",
        "--task",
        "--variant",
        "--q",
        "--bandwidth",
        "--grid-lo",
        "--grid-hi",
        "--grid-steps",
        "--weight-mode",
        "--out",
        "--format",
        "--verbose",
    ] {
        assert!(estimate.contains(flag), "estimate help lacks {flag}");
    }
    let simulate = run(&["simulate", "--help"]).stdout;
    for flag in ["--mode", "--n", "--ratio", "--reps", "--bootstrap-b", "--seed", "--out", "--format"] {
        assert!(simulate.contains(flag), "simulate help lacks {flag}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let r = run(&["estimate", "--task", "mean", "--unlabeled", "u.csv"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--labeled") && r.stderr.contains("Usage"), "{}", r.stderr);

    assert_eq!(run(&["estimate", "--bogus"]).code, 2);
    assert_eq!(run(&["simulate", "--task", "median"]).code, 2);
    assert_eq!(run(&["simulate", "--task", "mean", "--alpha", "1.5"]).code, 2);
    assert_eq!(run(&["simulate", "--task", "logreg", "--mode", "linear"]).code, 2);
    assert_eq!(run(&[]).code, 2);
}

#[test]
fn mutually_exclusive_flags_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, unlab) = write_data(dir.path(), 50, 200);
    let (l, u) = (lab.to_str().unwrap(), unlab.to_str().unwrap());
    for extra in [
        vec!["--task", "mean", "--q", "0.5"],
        vec!["--task", "mean", "--bandwidth", "0.2"],
        vec!["--task", "quantile", "--weight-mode", "refined"],
        vec!["--task", "mean", "--bonferroni"],
        vec!["--task", "mean", "--format", "csv"],
    ] {
        let mut args = vec!["estimate", "--labeled", l, "--unlabeled", u];
        args.extend(extra.iter());
        let r = run(&args);
        assert_eq!(r.code, 2, "{extra:?}: {}", r.stderr);
    }
    let r = run(&["estimate", "--labeled", l, "--unlabeled", u, "--task", "mean", "--grid-lo", "0"]);
    assert_eq!(r.code, 2);
}

#[test]
fn data_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let m = missing.to_str().unwrap();
    let r = run(&["estimate", "--task", "mean", "--labeled", m, "--unlabeled", m]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.starts_with("error:"));

    let (lab, unlab) = write_data(dir.path(), 50, 200);
    let r = run(&[
        "estimate",
        "--task",
        "mean",
        "--labeled",
        lab.to_str().unwrap(),
        "--unlabeled",
        unlab.to_str().unwrap(),
        "--expert-cols",
        "absent",
    ]);
    assert_eq!(r.code, 1, "{}", r.stderr);
}

#[test]
fn estimate_mean_plus_report() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, unlab) = write_data(dir.path(), 200, 2000);
    let r = run(&[
        "estimate",
        "--task",
        "mean",
        "--labeled",
        lab.to_str().unwrap(),
        "--unlabeled",
        unlab.to_str().unwrap(),
        "--expert-cols",
        "good,rough",
        "--alpha",
        "0.05",
        "--variant",
        "plus",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["task"], "mean");
    assert_eq!(v["variant"], "plus");
    assert_eq!(v["K"], 2);
    let ci = v["ci"].as_array().unwrap();
    let (lo, hi, theta) = (ci[0].as_f64().unwrap(), ci[1].as_f64().unwrap(), v["theta"].as_f64().unwrap());
    assert!(lo < theta && theta < hi);
    // True mean is 1; the good expert makes the interval narrow.
    assert!((theta - 1.0).abs() < 0.2, "{theta}");
    assert!(hi - lo < 0.4, "{lo} {hi}");
}

#[test]
fn estimate_other_tasks_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, unlab) = write_data(dir.path(), 200, 1000);
    let (l, u) = (lab.to_str().unwrap(), unlab.to_str().unwrap());
    let base = ["estimate", "--labeled", l, "--unlabeled", u, "--expert-cols", "good,rough"];
    for extra in [
        vec!["--task", "quantile", "--q", "0.5", "--grid-steps", "41"],
        vec!["--task", "linreg", "--covariate-cols", "x1", "--intercept", "--bonferroni"],
        vec!["--task", "mest:mean", "--grid-lo", "0", "--grid-hi", "2", "--grid-steps", "41"],
    ] {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(extra.iter());
        let r = run(&args);
        assert_eq!(r.code, 0, "{extra:?}: {}", r.stderr);
        let v: Value = serde_json::from_str(&r.stdout).unwrap();
        assert!(v.is_object());
    }
}

#[test]
fn compare_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, unlab) = write_data(dir.path(), 200, 2000);
    let out = dir.path().join("cmp.csv");
    let r = run(&[
        "compare",
        "--task",
        "mean",
        "--labeled",
        lab.to_str().unwrap(),
        "--unlabeled",
        unlab.to_str().unwrap(),
        "--expert-cols",
        "good,rough",
        "--format",
        "csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout.trim(), format!("report written to {}", out.display()));
    let body = fs::read_to_string(&out).unwrap();
    for method in ["conventional", "ppi-mean", "ppi-best", "ppi-worst", "ppi-moe"] {
        assert!(body.contains(method), "{method} missing from\n{body}");
    }
}

fn cell_columns(csv: &str, keep: usize) -> String {
    csv.lines().map(|l| l.split(',').take(keep).collect::<Vec<_>>().join(",") + "\n").collect()
}

#[test]
fn simulate_csv_schema_matches_golden() {
    let r = run(&["simulate", "--task", "mean", "--mode", "linear", "--n", "500", "--ratio", "10", "--reps", "500", "--seed", "7"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    check_golden("simulate_mean_schema.csv", &cell_columns(&r.stdout, 4));
    for line in r.stdout.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 7, "{line}");
        for cell in &cells[4..] {
            let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.replace('.', "").len(), 17, "{cell} is not 17 significant digits");
            cell.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn power_csv_schema() {
    let r = run(&["power", "--n-grid", "50,100", "--reps", "20", "--seed", "3", "--methods", "conventional,ppi-moe"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mut lines = r.stdout.lines();
    assert_eq!(lines.next().unwrap(), "Method,n,N,Power,MinimalN");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("conventional,50,500,"));
}

#[test]
fn same_seed_same_bytes_different_seed_differs() {
    let args = |seed: &'static str| ["simulate", "--task", "mean", "--reps", "30", "--bootstrap-b", "20", "--seed", seed, "--format", "json"];
    let a = run(&args("5")).stdout;
    let b = run(&args("5")).stdout;
    let c = run(&args("6")).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["seed"], 5);
}

#[test]
fn binary_exit_codes_and_thread_cap() {
    let bin = env!("CARGO_BIN_EXE_moeppi");
    let ok = Command::new(bin).args(["simulate", "--task", "mean", "--reps", "5", "--bootstrap-b", "0"]).env("MOEPPI_THREADS", "2").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).args(["simulate", "--task", "mean", "--reps", "5"]).env("MOEPPI_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let usage = Command::new(bin).arg("estimate").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    let help = Command::new(bin).arg("--version").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
