use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn granular(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_granular"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("GRANULAR_OUT")
        .env_remove("GRANULAR_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_PD: &str = r#"
seed = 3
e = 0.8

[model]
kind = "PureDiffusion"
mu = 1.0

[dsmc]
n = 20000
dt = 0.02
t_burn = 20.0
t_avg = 20.0

[moments]
p_max = 8.0

[compare]
p_max = 6.0
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn kernel_table_has_unit_gamma_one() {
    let dir = TempDir::new().unwrap();
    let o = granular(&["kernel", "--beta", "0.75", "--p", "1:0.5:10"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("kernel.csv")).unwrap();
    let rows: Vec<(f64, f64, f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 19);
    let (p, beta, g1, _) = rows[0];
    assert_eq!((p, beta), (1.0, 0.75));
    assert!((g1 - 1.0).abs() < 1e-10);
    assert!(rows.windows(2).all(|w| w[1].2 < w[0].2));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["status"], "complete");
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn povzner_suite_reports_no_violations() {
    let dir = TempDir::new().unwrap();
    let o = granular(&["verify", "povzner", "--trials", "1000", "--seed", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("verify.json"));
    assert_eq!(v[0]["suite"], "povzner");
    assert_eq!(v[0]["trials"], 1000);
    assert_eq!(v[0]["violations"], 0);
    assert_eq!(json(&dir.path().join("manifest.json"))["seed"], 1);
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = granular(&["run", "/nonexistent/experiment.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.toml"));
}

#[test]
fn unknown_config_key_is_rejected_before_running() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &SMALL_PD.replace("t_avg = 20.0", "t_avg = 20.0\nsteps = 5"));
    let out = dir.path().join("out");
    let o = granular(&["run", &cfg], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("steps"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn config_type_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &SMALL_PD.replace("n = 20000", "n = \"many\""));
    let o = granular(&["run", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 10"), "{}", stderr(&o));
}

#[test]
fn unresolved_time_step_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let o = granular(
        &["simulate", "--model", "negative-friction", "--kappa", "2", "--e", "0.8", "--dt", "0.1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dt"), "{}", stderr(&o));
}

#[test]
fn model_flags_must_match_the_model() {
    let dir = TempDir::new().unwrap();
    let o = granular(&["moments", "--model", "pure-diffusion", "--kappa", "1", "--e", "0.8", "--m1", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = granular(&["moments", "--model", "diffusion-friction", "--mu", "1", "--e", "0.8", "--m1", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--lambda"));
}

#[test]
fn failed_stage_leaves_a_partial_manifest() {
    let dir = TempDir::new().unwrap();
    // no steady state at e = 0.95 has this energy scale
    let o = granular(
        &["moments", "--model", "pure-diffusion", "--mu", "1", "--e", "0.95", "--m1", "11.39", "--m1-hi", "11.45"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["status"], "partial");
    assert_eq!(m["failed_stage"], "moments");
    assert!(m["error"].as_str().unwrap().contains("infeasible"));
}

/// Matched pipeline passes; a grid propagated for another restitution
/// coefficient, seeded at its own energy scale `m₁ ∝ (β(1−β))^{−2/3}`,
/// fails with listed violations.
#[test]
fn compare_matched_and_wrong_beta() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL_PD);
    let run = dir.path().join("run");
    let o = granular(&["run", &cfg], &run);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = json(&run.join("comparison.json"));
    assert_eq!(c["pass"], true);
    assert_eq!(c["verdicts"].as_array().unwrap().len(), 13);
    assert_eq!(json(&run.join("manifest.json"))["passed"], true);

    let report = run.join("report.json");
    let m1 = json(&report)["moments"]["entries"][2]["value"].as_f64().unwrap();
    let c_of = |e: f64| {
        let beta = (1.0 + e) / 2.0;
        beta * (1.0 - beta)
    };
    let m1_wrong = m1 * (c_of(0.8) / c_of(0.5)).powf(2.0 / 3.0);
    let wrong = dir.path().join("wrong");
    let (lo, hi) = ((0.99 * m1_wrong).to_string(), (1.01 * m1_wrong).to_string());
    let o = granular(
        &["moments", "--model", "pure-diffusion", "--mu", "1", "--e", "0.5", "--m1", &lo, "--m1-hi", &hi, "--p-max", "8"],
        &wrong,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp = dir.path().join("cmp");
    let o = granular(
        &["compare", report.to_str().unwrap(), wrong.join("grid.csv").to_str().unwrap()],
        &cmp,
    );
    assert_eq!(o.status.code(), Some(1));
    let c = json(&cmp.join("comparison.json"));
    assert_eq!(c["pass"], false);
    assert!(c["violations"].as_array().unwrap().iter().any(|p| p == 1.0), "{c}");
}

#[test]
fn compare_rejects_empty_and_foreign_grids() {
    let dir = TempDir::new().unwrap();
    let sim = dir.path().join("sim");
    let o = granular(
        &["simulate", "--model", "pure-diffusion", "--mu", "1", "--e", "0.8", "--n", "2000", "--t-burn", "2", "--t-avg", "2"],
        &sim,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = sim.join("report.json");

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "# e=0.8\n# model={\"kind\":\"PureDiffusion\",\"mu\":1.0}\np,m_lo,m_hi\n").unwrap();
    let o = granular(&["compare", report.to_str().unwrap(), empty.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mismatched parameters"), "{}", stderr(&o));

    let foreign = dir.path().join("foreign");
    let o = granular(&["moments", "--model", "shear-flow", "--kappa", "1", "--e", "0.8", "--m1", "3", "--p-max", "4"], &foreign);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = granular(
        &["compare", report.to_str().unwrap(), foreign.join("grid.csv").to_str().unwrap()],
        &dir.path().join("b"),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mismatched parameters"));
}

fn simulate(out: &Path, threads: &str) -> Vec<u8> {
    let o = granular(
        &[
            "simulate", "--model", "shear-flow", "--kappa", "1", "--e", "0.8", "--n", "4000", "--t-burn", "2",
            "--t-avg", "4", "--seed", "11", "--threads", threads,
        ],
        out,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::read(out.join("report.json")).unwrap()
}

#[test]
fn single_thread_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(simulate(&a, "1"), simulate(&b, "1"));
    assert_eq!(std::fs::read(a.join("manifest.json")).unwrap(), std::fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn partitioned_reports_repeat_for_a_fixed_thread_count() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir.path().join("a"), "3");
    assert_eq!(a, simulate(&dir.path().join("b"), "3"));
    assert_eq!(json(&dir.path().join("a/report.json"))["partitions"], 3);
}

#[test]
fn analyze_refits_a_stored_report() {
    let dir = TempDir::new().unwrap();
    let sim = dir.path().join("sim");
    let o = granular(
        &["simulate", "--model", "diffusion-friction", "--mu", "1", "--lambda", "1", "--e", "0.8", "--n", "20000", "--t-burn", "10", "--t-avg", "10"],
        &sim,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("tail");
    let o = granular(&["analyze", sim.join("report.json").to_str().unwrap(), "--bootstrap", "20"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = json(&out.join("tail.json"));
    assert_eq!(t["predicted_s"], 2.0);
    let s = t["histogram"]["estimate"]["s"].as_f64().unwrap();
    assert!((s - 2.0).abs() < 0.5, "{s}");
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_granular"))
        .args(["kernel", "--beta", "1", "--p", "2"])
        .env("GRANULAR_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("kernel.csv").exists());
}
