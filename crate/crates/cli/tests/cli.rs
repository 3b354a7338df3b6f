use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn vmmma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmmma")).args(args).output().unwrap()
}

fn run_ok(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"];
    args.extend(extra);
    let o = vmmma(&args);
    assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.deserialize().map(|x| x.unwrap()).collect();
    (header, rows)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(files(&p));
        } else {
            v.push(p);
        }
    }
    v.sort();
    v
}

#[test]
fn simulate_is_byte_identical_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok("simulate", &config("reference.toml"), &a, &["--reps", "500"]);
    run_ok("simulate", &config("reference.toml"), &b, &["--reps", "500"]);
    let fa = files(&a);
    assert_eq!(fa.len(), 2 * 3 * 2 + 1);
    for p in fa {
        let q = b.join(p.strip_prefix(&a).unwrap());
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap(), "{}", p.display());
    }
}

#[test]
fn another_seed_changes_fields_but_not_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok("simulate", &config("reference.toml"), &a, &[]);
    run_ok("simulate", &config("reference.toml"), &b, &["--seed", "99"]);
    let xa = read_csv(&a.join("fields/x_0000.csv")).1;
    let xb = read_csv(&b.join("fields/x_0000.csv")).1;
    assert!(xa.iter().zip(&xb).any(|(p, q)| p[1] != q[1]));
    let (sa, sb) = (read_json(&a.join("summary.json")), read_json(&b.join("summary.json")));
    assert_eq!(sb["summary"]["master_seed"], 99);
    for key in ["mean", "variance", "mean_v"] {
        let (ea, eb) = (&sa["summary"][key], &sb["summary"][key]);
        let d = (ea["value"].as_f64().unwrap() - eb["value"].as_f64().unwrap()).abs();
        let se = ea["se"].as_f64().unwrap().hypot(eb["se"].as_f64().unwrap());
        assert!(d < 4.0 * se, "{key}: {d} vs {se}");
    }
}

#[test]
fn zero_volatility_gives_zero_fields() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok("simulate", &config("zero_volatility.toml"), tmp.path(), &[]);
    let (header, rows) = read_csv(&tmp.path().join("fields/x_0000.csv"));
    assert_eq!(header, ["x1", "x2", "value"]);
    assert_eq!(rows.len(), 64);
    assert!(rows.iter().all(|r| r[2] == 0.0));
    let text = std::fs::read_to_string(tmp.path().join("fields/x_0000.csv")).unwrap();
    assert!(!text.contains("-0.0"));
}

#[test]
fn analyze_reference_passes_and_cf_starts_at_one() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok("analyze", &config("reference.toml"), tmp.path(), &[]);
    let report = read_json(&tmp.path().join("report.json"));
    let failing: Vec<&Value> = report["checks"].as_array().unwrap().iter().filter(|c| c["pass"] != true).collect();
    assert!(failing.is_empty(), "{failing:?}");
    assert_eq!(report["monotonicity"]["pass"], true);
    assert_eq!(report["pass"], true);
    for c in report["checks"].as_array().unwrap() {
        assert!(c["se"].is_number() && c["tolerance"].is_number());
    }
    let (_, cf) = read_csv(&tmp.path().join("cf.csv"));
    assert_eq!(cf[0], vec![0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn bochner_violation_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vmmma(&["analyze", "--config", config("bochner_violation.toml").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a covariance"));
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let reference = std::fs::read_to_string(config("reference.toml")).unwrap();
    let cases = [
        reference.replace("n_reps = 4000", "n_replications = 4000"),
        reference.replace("rate = 1.0 }", "rate = -1.0 }"),
        reference.replace("anchor = [0.5]", "anchor = [0.55]"),
        reference.replace("count = [21]", "count = [21, 3]"),
        "not toml [".to_string(),
    ];
    for text in cases {
        std::fs::write(&cfg, &text).unwrap();
        let o = vmmma(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "--reps", "10"]);
        assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(vmmma(&["simulate"]).status.code(), Some(1));
    assert_eq!(vmmma(&["frobnicate", "--config", "x"]).status.code(), Some(1));
    assert_eq!(vmmma(&["--help"]).status.code(), Some(0));
}

fn design(root: &str) -> (Value, Vec<Vec<f64>>) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("d.toml");
    let text = std::fs::read_to_string(config("design_gaussian.toml")).unwrap();
    std::fs::write(&cfg, text.replace("root = \"even\"", &format!("root = \"{root}\""))).unwrap();
    run_ok("design-kernel", &cfg, tmp.path(), &[]);
    (read_json(&tmp.path().join("design.json")), read_csv(&tmp.path().join("kernel.csv")).1)
}

#[test]
fn design_kernel_even_and_odd() {
    let (even, ke) = design("even");
    let (odd, ko) = design("odd");
    let err = |v: &Value| v["roundtrip"]["value"].as_f64().unwrap();
    assert!(err(&even) < 1e-3 && even["roundtrip"]["pass"] == true);
    assert!((err(&even) - err(&odd)).abs() < 1e-10);
    // Rows are z = -nΔ, …, (n-1)Δ; row j mirrors row 2n - j.
    let m = ke.len();
    assert_eq!(m, 800);
    for j in 1..m {
        assert!((ke[j][0] + ke[m - j][0]).abs() < 1e-12);
        assert!((ke[j][1] - ke[m - j][1]).abs() < 1e-12);
        assert!((ko[j][1] + ko[m - j][1]).abs() < 1e-12);
    }
    assert_eq!(even["symmetry"]["pass"], true);
    assert_eq!(odd["symmetry"]["name"], "odd_antisymmetry");
    assert_eq!(odd["symmetry"]["pass"], true);
}

#[test]
fn lamperti_half_has_brownian_covariance() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok("lamperti", &config("lamperti_half.toml"), tmp.path(), &[]);
    let report = read_json(&tmp.path().join("lamperti.json"));
    assert_eq!(report["pass"], true);
    let var_x0 = report["var_x0"].as_f64().unwrap();
    let (header, rows) = read_csv(&tmp.path().join("mss_covariance.csv"));
    assert_eq!(header, ["t1", "s1", "analytic", "mc", "se", "stat_incr"]);
    for r in &rows {
        let brownian = r[0].min(r[1]) * var_x0;
        assert!((r[5] - brownian).abs() < 1e-12 * brownian);
        assert!((r[2] - brownian).abs() < 1e-6 * brownian);
        assert!((r[3] - brownian).abs() < 4.0 * r[4]);
    }
    let (_, spec) = read_csv(&tmp.path().join("rho_spectral.csv"));
    assert_eq!(spec.len(), 41);
    assert!(spec.iter().all(|r| r[3] < 1e-5));

    let (_, x) = read_csv(&tmp.path().join("fields/x_0000.csv"));
    let (_, y) = read_csv(&tmp.path().join("fields/y_0000.csv"));
    for (a, b) in x.iter().zip(&y) {
        assert!((b[0] - a[0].exp()).abs() < 1e-12 * b[0]);
        assert!((b[1] - b[0].sqrt() * a[1]).abs() <= 1e-12 * b[1].abs());
    }
    let side = read_json(&tmp.path().join("fields/y_0000.json"));
    assert_eq!(side["hurst"], serde_json::json!([0.5]));
    assert_eq!(side["lattice"], "exponential");
}
