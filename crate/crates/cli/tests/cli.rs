use std::path::Path;
use std::process::{Command, Output};

fn bmlab(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bmlab"));
    cmd.args(args);
    match out_dir {
        Some(d) => cmd.env("BMLAB_OUTPUT_DIR", d),
        None => cmd.env_remove("BMLAB_OUTPUT_DIR"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_csv() {
    let o = bmlab(&["simulate", "--model", "ar1:0.5", "--n", "64", "--seed", "3"], None);
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "k,value");
    assert_eq!(lines.len(), 65);
    // same seed, same path
    assert_eq!(s, stdout(&bmlab(&["simulate", "--model", "ar1:0.5", "--n", "64", "--seed", "3"], None)));
}

#[test]
fn coeffs_and_fit() {
    let s = stdout(&bmlab(&["coeffs", "ecf_cos:1", "--q-max", "4"], None));
    assert!(s.starts_with("q,coeff"));
    let s = stdout(&bmlab(&["coeffs", "ecf_cos:1", "--fit"], None));
    let v: serde_json::Value = serde_json::from_str(s.trim()).unwrap();
    assert_eq!(v["beta"], 1.0);
}

#[test]
fn cov_report_is_json() {
    let s = stdout(&bmlab(&["cov", "--statistic", "mom", "--d", "2", "--model", "iid", "--n", "100"], None));
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert!(v["sigma_star_sq"].as_f64().unwrap() > 0.0);
}

#[test]
fn bound_main() {
    let s = stdout(&bmlab(
        &["bound", "--statistic", "ecf_cos:1", "--d", "2", "--model", "ar1:0.5", "--n", "1024", "--distance", "dC"],
        None,
    ));
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert!(v["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn presets_listed() {
    let s = stdout(&bmlab(&["presets"], None));
    for name in ["mom_rate", "ecf_rate", "fgn_eigen", "dimension_scaling"] {
        assert!(s.contains(name), "{name} missing from {s}");
    }
}

#[test]
fn experiment_writes_outputs_to_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bmlab(
        &["experiment", "--preset", "mom_rate", "--replicates", "1000", "--n-grid", "64,128", "--n-ref", "20000"],
        Some(dir.path()),
    );
    stdout(&o);
    for suffix in ["estimates.csv", "bounds.csv", "covariance.csv", "summary.json"] {
        let p = dir.path().join(format!("mom_rate_{suffix}"));
        assert!(p.exists(), "{} missing", p.display());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mom_rate_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_input_fails_cleanly() {
    let o = bmlab(&["simulate", "--model", "ar1:1.5", "--n", "8"], None);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn too_few_replicates_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = bmlab(&["experiment", "--preset", "mom_rate", "--replicates", "200"], Some(dir.path()));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("1000"));
}
