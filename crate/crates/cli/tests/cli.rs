use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
horizons = [128, 512, 2048]
replications = 2
seed = 5

[noise.xi]
kind = "uniform"
half_width = 0.5

[noise.zeta]
kind = "gaussian"
sigma = 0.3

[market]
kind = "linear"
phi = [0.3, 0.1]
bound = 0.5

[context]
mode = "parametric"

[[policy]]
kind = "parametric"

[[policy]]
kind = "fixed"
price = 0.2
"#;

fn heavytrade(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_heavytrade")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sweep_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("out");
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    heavytrade(&["sweep", "--config", cfg_s, "--out", out_s, "--jobs", "2", "--seed", "9"]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3 * 2 + 2 * 3);
    assert!(summary.contains("parametric,128,median,9,"));
    assert!(json(&out.join("certification.json"))["noise_xi"]["pass"].as_bool().unwrap());

    let summary_path = out.join("summary.csv");
    heavytrade(&["fit-rate", "--in", summary_path.to_str().unwrap(), "--out", out_s]);
    let fits = json(&out.join("fit_rate.json"));
    assert_eq!(fits.as_array().unwrap().len(), 2);
    assert!(fits[1]["fit"]["slope"].as_f64().unwrap() > 0.9);

    heavytrade(&["simulate", "--config", cfg_s, "--out", out_s, "--policy", "fixed", "--T", "512", "--replication", "1"]);
    let trace = std::fs::read_to_string(out.join("trace_fixed_T512_r1.csv")).unwrap();
    assert_eq!(trace.lines().count(), 513);
}

#[test]
fn certification_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = heavytrade(&["verify-lemma", "--config", cfg.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["pass"].as_bool().unwrap());
    let out = heavytrade(&["certify-noise", "--config", cfg.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["pass"].as_bool().unwrap());
}

#[test]
fn lowerbound_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    heavytrade(&["lowerbound", "--T", "1048576", "--p", "1.5", "--beta", "1", "--d", "1", "--LH", "1", "--mu0", "1", "--L", "10", "--sigma-p", "1", "--out", out]);
    let report = json(&dir.path().join("lowerbound.json"));
    assert_eq!(report["plan"]["h"].as_f64().unwrap(), 2f64.powi(-5));
    assert!(report["plan"]["pair"]["pass"].as_bool().unwrap());
    assert_eq!(report["plan"]["c0"].as_f64().unwrap(), 10.0);
    assert!((report["kl_sweep"]["slope"].as_f64().unwrap() - 3.0).abs() < 0.05);
    let csv = std::fs::read_to_string(dir.path().join("kl_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn missing_config_is_an_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_heavytrade")).args(["sweep"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
