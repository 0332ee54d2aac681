//! End-to-end tests of the binary: exit codes, emitted files, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_krrimpute"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic.csv")
}

/// Full-sample mean of the fixture's outcome before masking; recorded when
/// the fixture was generated.
const FIXTURE_FULL_MEAN: f64 = 23.1145255919;

#[test]
fn estimate_runs_on_fixture_and_brackets_the_known_answer() {
    let dir = tempfile::tempdir().unwrap();
    let status = binary()
        .args([
            "estimate",
            "--input",
            fixture().to_str().unwrap(),
            "--outcome-col",
            "y",
            "--covariate-cols",
            "x1,x2,x3,x4",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n"], 120);
    assert_eq!(report["n_respondents"], 72);
    let estimates = report["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 4);
    for row in estimates {
        let pe = row["point_estimate"].as_f64().unwrap();
        let lo = row["ci_lower"].as_f64().unwrap();
        let hi = row["ci_upper"].as_f64().unwrap();
        let se = row["std_error"].as_f64().unwrap();
        assert!(pe.is_finite() && se.is_finite());
        assert!(lo <= pe && pe <= hi);
    }
    // the KRR imputation estimate lands near the known full-sample mean
    let krr = estimates.iter().find(|r| r["method"] == "KRR_IM").unwrap();
    let pe = krr["point_estimate"].as_f64().unwrap();
    let se = krr["std_error"].as_f64().unwrap();
    assert!(
        (pe - FIXTURE_FULL_MEAN).abs() < 4.0 * se,
        "KRR_IM {pe} vs full mean {FIXTURE_FULL_MEAN} (se {se})"
    );
    // diagnostics carry the tuning trace
    assert!(report["diagnostics"]["lambda"].as_f64().unwrap() > 0.0);
    assert!(report["diagnostics"]["gcv_path"].as_array().unwrap().len() == 40);
}

#[test]
fn estimate_complete_method_returns_observed_mean() {
    let dir = tempfile::tempdir().unwrap();
    let status = binary()
        .args([
            "estimate",
            "--input",
            fixture().to_str().unwrap(),
            "--outcome-col",
            "y",
            "--method",
            "complete",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let estimates = report["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 1);
    assert_eq!(estimates[0]["method"], "COMPLETE");

    // recompute the observed mean from the raw file
    let text = fs::read_to_string(fixture()).unwrap();
    let mut sum = 0.0;
    let mut count = 0usize;
    for line in text.lines().skip(1) {
        let cell = line.split(',').next().unwrap();
        if cell != "NA" {
            sum += cell.parse::<f64>().unwrap();
            count += 1;
        }
    }
    let observed_mean = sum / count as f64;
    let pe = estimates[0]["point_estimate"].as_f64().unwrap();
    assert!((pe - observed_mean).abs() < 1e-12);
    // no fit diagnostics for the complete-case-only run
    assert!(report["diagnostics"].is_null());
}

#[test]
fn estimate_is_byte_deterministic() {
    let run = |dir: &Path| {
        let status = binary()
            .args([
                "estimate",
                "--input",
                fixture().to_str().unwrap(),
                "--outcome-col",
                "y",
                "--seed",
                "11",
                "--output-dir",
                dir.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(dir.join("report.json")).unwrap()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    assert_eq!(run(d1.path()), run(d2.path()));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.conf");
    fs::write(
        &config_path,
        format!(
            "input = {}\noutcome-col = y\nlevel = 0.9\nmethod = complete\n",
            fixture().display()
        ),
    )
    .unwrap();

    // config alone
    let out1 = dir.path().join("a");
    let status = binary()
        .args([
            "estimate",
            "--config",
            config_path.to_str().unwrap(),
            "--output-dir",
            out1.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["level"], 0.9);

    // explicit flag beats the file
    let out2 = dir.path().join("b");
    let status = binary()
        .args([
            "estimate",
            "--config",
            config_path.to_str().unwrap(),
            "--level",
            "0.95",
            "--output-dir",
            out2.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["level"], 0.95);
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap().to_string();

    // unreadable file
    let status = binary()
        .args(["estimate", "--input", "/nonexistent.csv", "--outcome-col", "y", "--output-dir", &out])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // schema violation: outcome column absent
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n").unwrap();
    let status = binary()
        .args(["estimate", "--input", bad.to_str().unwrap(), "--outcome-col", "y", "--output-dir", &out])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // all outcomes missing
    let empty = dir.path().join("allmissing.csv");
    fs::write(&empty, "y,x\nNA,1\nNA,2\n").unwrap();
    let status = binary()
        .args(["estimate", "--input", empty.to_str().unwrap(), "--outcome-col", "y", "--output-dir", &out])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // invalid level
    let status = binary()
        .args([
            "estimate", "--input", fixture().to_str().unwrap(), "--outcome-col", "y",
            "--level", "1.5", "--output-dir", &out,
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    // constant covariate breaks the rescaler during fitting
    let path = dir.path().join("constant.csv");
    fs::write(&path, "y,x\n1.0,5.0\n2.0,5.0\nNA,5.0\n3.0,5.0\n").unwrap();
    let status = binary()
        .args([
            "estimate",
            "--input",
            path.to_str().unwrap(),
            "--outcome-col",
            "y",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn simulate_writes_files_and_validates_b() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap().to_string();

    // B = 1 rejected
    let status = binary()
        .args(["simulate", "--model", "a", "--mechanism", "1", "--n", "60", "--B", "1", "--output-dir", &out])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let status = binary()
        .args([
            "simulate", "--model", "a", "--mechanism", "1", "--n", "60", "--B", "2",
            "--seed", "7", "--output-dir", &out,
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["n"], 60);
    assert_eq!(summary["replicates"], 2);
    for est in summary["estimators"].as_array().unwrap() {
        let c90 = est["coverage_90_pct"].as_f64().unwrap();
        let c95 = est["coverage_95_pct"].as_f64().unwrap();
        assert!((0.0..=100.0).contains(&c90));
        assert!((0.0..=100.0).contains(&c95));
    }

    let csv = fs::read_to_string(dir.path().join("replicates.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,estimator,theta_hat,v_hat,covered_90,covered_95");
    assert_eq!(lines.len(), 1 + 2 * 3); // two replicates, three estimators
}

#[test]
fn weights_exports_unit_lower_bounded_weights() {
    let dir = tempfile::tempdir().unwrap();
    let status = binary()
        .args([
            "weights",
            "--input",
            fixture().to_str().unwrap(),
            "--outcome-col",
            "y",
            "--output-dir",
            dir.path().to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        let omega: f64 = fields[2].parse().unwrap();
        assert!(omega >= 1.0, "omega {omega}");
        rows += 1;
    }
    assert_eq!(rows, 120);
}
