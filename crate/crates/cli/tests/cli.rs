use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TWO_STATE: &str = r#"{"states": ["x", "y"], "K": [[0.8, 0.2], [0.4, 0.6]], "p": [1.0, 1.0]}"#;
const THREE: &str = r#"{"states": ["a", "b", "c"], "K": [[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]]}"#;

fn graphflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphflow")).args(args).env_remove("GRAPHFLOW_SEED").output().unwrap()
}

fn chain_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_accepts_two_state_chain() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", TWO_STATE);
    let o = graphflow(&["validate", "--chain", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("2 states"));
}

#[test]
fn validate_rejects_identity_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", r#"{"states": ["x", "y"], "K": [[1, 0], [0, 1]]}"#);
    let o = graphflow(&["validate", "--chain", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("irreducible"));
}

#[test]
fn distance_between_equal_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", TWO_STATE);
    let a = chain_file(dir.path(), "a.json", "[0.6, 0.8]");
    let a = a.to_str().unwrap();
    let o = graphflow(&["distance", "--chain", c.to_str().unwrap(), "--metric", "W", "--mu0", a, "--mu1", a]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value"], 0.0);
}

#[test]
fn distance_writes_summary_and_reloadable_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", TWO_STATE);
    let c = c.to_str().unwrap();
    let out = dir.path().join("run/report.json");
    let o = graphflow(&["distance", "--chain", c, "--mu0", "0.6,0.8", "--mu1", "1.1,1.3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!((v["distance"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    let csv = dir.path().join("run/report.csv");
    let o = graphflow(&["validate", "--chain", c, "--trajectory", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_and_domain_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", TWO_STATE);
    let c = c.to_str().unwrap();
    assert_eq!(graphflow(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(graphflow(&["distance", "--chain", c, "--mu0", "0.6"]).status.code(), Some(2));
    assert_eq!(graphflow(&["distance", "--chain", c, "--mu0", "0.6", "--mu1", "1,1"]).status.code(), Some(2));
    assert_eq!(graphflow(&["distance", "--chain", c, "--mu0", "1,1", "--mu1", "1,1", "--steps", "0"]).status.code(), Some(2));
    let o = graphflow(&["distance", "--chain", c, "--metric", "ME", "--mu0", "0.6,1", "--mu1", "1,1"]);
    assert_eq!(o.status.code(), Some(1));
    let missing = dir.path().join("missing.json");
    assert_eq!(graphflow(&["validate", "--chain", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn rays_emit_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", TWO_STATE);
    let out = dir.path().join("fan");
    let o = graphflow(&[
        "rays", "--chain", c.to_str().unwrap(), "--start", "0.6,0.8", "--n-rays", "72", "--t-max", "3", "--eps-bd", "1e-6",
        "--dt-min", "5e-4", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let rays = manifest["rays"].as_array().unwrap();
    assert_eq!(rays.len(), 72);
    for r in rays {
        assert!(out.join(r["file"].as_str().unwrap()).is_file());
        assert!(["reached_tmax", "boundary_touch", "step_underflow"].contains(&r["stop_reason"].as_str().unwrap()));
        assert!(r["speed_drift"].as_f64().unwrap() <= 1e-4);
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", THREE);
    let c = c.to_str().unwrap();
    let run = |name: &str| -> (Vec<u8>, Vec<u8>) {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_graphflow"))
            .args(["rays", "--chain", c, "--start", "0.5,1,1.5", "--n-rays", "6", "--t-max", "0.5", "--out", out.to_str().unwrap()])
            .env("GRAPHFLOW_SEED", "9")
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        (std::fs::read(out.join("manifest.json")).unwrap(), std::fs::read(out.join("ray_003.csv")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
    let solve = |name: &str| -> Vec<u8> {
        let out = dir.path().join(name);
        let o = graphflow(&["dual", "--chain", c, "--mu0", "0.5,1,1.5", "--mu1", "1.2,0.4,0.9", "--steps", "16", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let mut bytes = std::fs::read(&out).unwrap();
        bytes.extend(std::fs::read(out.with_file_name(format!("{}_certificate.csv", name.trim_end_matches(".json")))).unwrap());
        bytes
    };
    assert_eq!(solve("g1.json"), solve("g2.json"));
}

#[test]
fn seed_changes_random_directions() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", THREE);
    let c = c.to_str().unwrap();
    let manifest = |seed: &str| -> String {
        let out = dir.path().join(format!("s{seed}"));
        let o = graphflow(&["rays", "--chain", c, "--start", "0.5,1,1.5", "--n-rays", "4", "--t-max", "0.2", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read_to_string(out.join("ray_000.csv")).unwrap()
    };
    assert_ne!(manifest("1"), manifest("2"));
}

#[test]
fn compare_prints_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", THREE);
    let out = dir.path().join("cmp.json");
    let o = graphflow(&["compare", "--chain", c.to_str().unwrap(), "--mu0", "0.3,1.5,0.8", "--mu1", "1.4,0.5,1.0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    let first = line.lines().next().unwrap();
    assert!(first.starts_with("D = ") && first.contains(" < W = "), "{first}");
    assert!(out.is_file());
}

#[test]
fn compare_includes_conservative_metric_for_equal_masses() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", TWO_STATE);
    // Both endpoints have mass 1 under π = (2/3, 1/3).
    let o = graphflow(&["compare", "--chain", c.to_str().unwrap(), "--mu0", "0.3,2.4", "--mu1", "1.35,0.3", "--steps", "32"]);
    assert_eq!(o.status.code(), Some(0));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert!(first.contains("< W = ") && first.contains("< ME = "), "{first}");
}

#[test]
fn geodesic_shoots_span_direction() {
    let dir = tempfile::tempdir().unwrap();
    let c = chain_file(dir.path(), "c.json", TWO_STATE);
    let o = graphflow(&["geodesic", "--chain", c.to_str().unwrap(), "--mu0", "0.6,0.8", "--mu1", "1.1,1.3"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["value"].as_f64().unwrap() - 0.25).abs() < 1e-8);
}

#[test]
fn suite_runs_selected_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("suite.json");
    let o = graphflow(&["suite", "--criteria", "1,6", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 2);
    assert_eq!(graphflow(&["suite", "--criteria", "9"]).status.code(), Some(2));
}
