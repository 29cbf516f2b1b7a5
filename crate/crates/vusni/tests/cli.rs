use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::{Retrieve, Uri};
use serde_json::Value;
use tempfile::TempDir;

fn vusni(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vusni")).args(args).env_remove("VUSNI_SEED").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schema").join(name)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct LocalSchemas;

impl Retrieve for LocalSchemas {
    fn retrieve(&self, uri: &Uri<String>) -> Result<Value, Box<dyn std::error::Error + Send + Sync>> {
        match uri.as_str() {
            "urn:vusni:schema:fit-report" => Ok(read_json(&schema_path("fit_report.schema.json"))),
            other => Err(format!("unknown schema {other}").into()),
        }
    }
}

fn assert_valid(schema: &str, instance: &Value) {
    let validator = jsonschema::options().with_retriever(LocalSchemas).build(&read_json(&schema_path(schema))).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}");
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> String {
    let path = dir.path().join(name).display().to_string();
    let mut args = vec!["generate", "--output", path.as_str()];
    args.extend_from_slice(extra);
    let out = vusni(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn fit_writes_a_converged_report() {
    let dir = TempDir::new().unwrap();
    let input = generate(&dir, "d.csv", &["--scenario", "2", "--n", "1500", "--seed", "3"]);
    let json = dir.path().join("fit.json");
    let out = vusni(&["fit", "--input", &input, "--restarts", "5", "--seed", "7", "--output", json.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&json);
    assert_valid("fit_report.schema.json", &report);
    assert!(report["grad_norm"].as_f64().unwrap() <= 1e-6);
    assert_eq!(report["model"], "nonignorable");
    assert_eq!(report["xi_flat"].as_array().unwrap().len(), 11);
    assert!(report["fixed"].as_array().unwrap().is_empty());
}

#[test]
fn mar_fit_reports_lambda_fixed_at_zero() {
    let dir = TempDir::new().unwrap();
    let input = generate(&dir, "d.csv", &["--scenario", "2", "--n", "600", "--seed", "4"]);
    let out = vusni(&["fit", "--input", &input, "--constrain-mar"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("fit_report.schema.json", &report);
    assert_eq!(report["xi_hat"]["lambda1"], 0.0);
    assert_eq!(report["xi_hat"]["lambda2"], 0.0);
    assert_eq!(report["fixed"], serde_json::json!(["lambda1", "lambda2"]));
    assert_eq!(report["model"], "mar");
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let out = vusni(&["fit", "--input", "/nonexistent/vusni-input.csv"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/vusni-input.csv"));
}

#[test]
fn malformed_row_is_a_data_error_naming_the_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t,a1,v,d\n1,0,1,1\n2,0,0,\n1.2,0.3,0,2\n").unwrap();
    let out = vusni(&["estimate", "--input", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn fully_verified_data_gives_equal_nonparametric_and_msi() {
    let dir = TempDir::new().unwrap();
    let input = generate(&dir, "full.csv", &["--scenario", "2", "--n", "400", "--seed", "5", "--full"]);
    let out = vusni(&["estimate", "--input", &input, "--methods", "nonparametric,msi"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("estimate_report.schema.json", &report);
    let est = report["estimates"].as_array().unwrap();
    assert_eq!(est.len(), 2);
    assert_eq!(est[0]["mu_hat"], est[1]["mu_hat"]);
}

#[test]
fn estimate_with_lrt_on_nonignorable_data() {
    let dir = TempDir::new().unwrap();
    let input = generate(&dir, "d.csv", &["--scenario", "2", "--n", "1500", "--seed", "6"]);
    let json = dir.path().join("est.json");
    let out = vusni(&[
        "estimate",
        "--input",
        &input,
        "--with-lrt",
        "--methods",
        "fi,fi_alt,msi,ipw,pdr,nonparametric",
        "--bootstrap",
        "50",
        "--output",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&json);
    assert_valid("estimate_report.schema.json", &report);
    let lrt = &report["lrt"];
    assert_eq!(lrt["df"], 2);
    assert!(lrt["stat"].as_f64().unwrap() >= 0.0);
    assert!(lrt["p_value"].is_number());
    assert_eq!(report["estimates"].as_array().unwrap().len(), 6);
    assert!(report["bootstrap"]["se"].as_f64().unwrap() > 0.0);
    let fi = &report["estimates"][0];
    let (mu, se) = (fi["mu_hat"].as_f64().unwrap(), fi["se"].as_f64().unwrap());
    assert!((mu - 0.387).abs() <= 3.0 * se, "FI {mu} ± {se}");
}

#[test]
fn standardize_reports_the_transform() {
    let dir = TempDir::new().unwrap();
    let input = generate(&dir, "d.csv", &["--scenario", "1", "--n", "800", "--seed", "8"]);
    let out = vusni(&["estimate", "--input", &input, "--standardize", "--methods", "fi"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("estimate_report.schema.json", &report);
    assert!(report["standardization"]["t"]["sd"].as_f64().unwrap() > 0.0);
    assert_eq!(report["standardization"]["a"].as_array().unwrap().len(), 1);
    assert!(report["fit"]["standardization"].is_object());
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let run = |sub: &str, jobs: &str| {
        let out_dir = dir.path().join(sub);
        let out = vusni(&[
            "simulate", "--scenario", "2", "--n", "300", "--reps", "4", "--seed", "1", "--jobs", jobs, "--with-lrt",
            "--out-dir", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("MCmean"));
        ["summary.csv", "params.csv", "replications.csv"].map(|f| std::fs::read(out_dir.join(f)).unwrap())
    };
    let a = run("a", "1");
    let b = run("b", "3");
    assert_eq!(a, b);
    let summary = String::from_utf8(a[0].clone()).unwrap();
    assert!(summary.starts_with("method,n,MCmean,Bias%,MCsd,Esd,CP\nfi,300,"));
    assert_eq!(String::from_utf8(a[2].clone()).unwrap().lines().count(), 5);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&vusni(&["simulate", "--scenario", "2", "--n", "1500", "--reps", "0"])), 64);
    assert_eq!(code(&vusni(&["estimate", "--input", "x.csv", "--level", "0"])), 64);
    assert_eq!(code(&vusni(&[])), 64);
    assert_eq!(code(&vusni(&["--help"])), 0);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = TempDir::new().unwrap();
    let explicit = generate(&dir, "a.csv", &["--scenario", "1", "--n", "50", "--seed", "99"]);
    let path = dir.path().join("b.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_vusni"))
        .args(["generate", "--scenario", "1", "--n", "50", "--output", path.to_str().unwrap()])
        .env("VUSNI_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(explicit).unwrap(), std::fs::read(path).unwrap());
}
