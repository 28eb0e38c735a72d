use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hcsim(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hcsim"));
    cmd.args(args).env_remove("HCSIM_OUTPUT_ROOT");
    if let Some(r) = root {
        cmd.env("HCSIM_OUTPUT_ROOT", r);
    }
    cmd.output().expect("binary runs")
}

const SMALL: &str = r#"
kind = "free_packet"
seed = 11
[grid]
extents = [[-10.0, 10.0]]
points = [128]
[physics]
alpha = 1.0
[packet]
center = [0.0]
sigma = [1.0]
wavevector = [0.5]
[run]
members = 2000
dt = 0.01
t_final = 0.5
snapshot_times = [0.0, 0.5]
[report]
bins = [32]
floor_replicates = 5
[output]
dir = "small"
formats = ["json", "hcf1", "field_csv", "trajectories"]
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("c.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_artifacts_under_env_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let root = tmp.path().join("outroot");
    let out = hcsim(&["run", cfg.to_str().unwrap()], Some(&root));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = root.join("small");
    for f in [
        "manifest.json",
        "report.json",
        "trajectories.csv",
        "fields/snapshot_000.hcf1",
        "fields/snapshot_001.csv",
    ] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let traj = std::fs::read_to_string(dir.join("trajectories.csv")).unwrap();
    assert_eq!(
        traj.lines().next(),
        Some("member_id,t,x_1,branch_label,regularized_hits")
    );
    let bytes = std::fs::read(dir.join("fields/snapshot_001.hcf1")).unwrap();
    let (field, alpha) = hcsim_core::io::decode_hcf1(&bytes).unwrap();
    assert_eq!(alpha, 1.0);
    assert!((field.time() - 0.5).abs() < 1e-12);
}

#[test]
fn repeated_runs_give_identical_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let root = tmp.path().join(name);
        let out = hcsim(&["run", cfg.to_str().unwrap()], Some(&root));
        assert_eq!(out.status.code(), Some(0));
        manifests.push(std::fs::read(root.join("small/manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &SMALL.replace("alpha = 1.0", "alpha = 1.0\ngamma = 3"),
    );
    let out = hcsim(&["run", cfg.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn invalid_config_and_missing_file_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &SMALL.replace("points = [128]", "points = [100]"),
    );
    assert_eq!(
        hcsim(&["run", cfg.to_str().unwrap()], Some(tmp.path()))
            .status
            .code(),
        Some(2)
    );
    let missing = tmp.path().join("nope.toml");
    assert_eq!(
        hcsim(&["run", missing.to_str().unwrap()], Some(tmp.path()))
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn runtime_failure_exits_1() {
    // A wide packet on a small box leaks density onto the boundary.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("sigma = [1.0]", "sigma = [3.0]"));
    let out = hcsim(&["run", cfg.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn verify_unknown_suite_exits_2() {
    let out = hcsim(&["verify", "everything"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("acceptance"));
}

#[test]
fn verify_oracles_passes() {
    let out = hcsim(&["verify", "oracles"], None);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("[PASS] criterion 7"));
}

#[test]
fn dump_schema_is_json() {
    let out = hcsim(&["dump-schema"], None);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.to_string().contains("free_packet"));
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(hcsim(&[], None).status.code(), Some(2));
    assert_eq!(hcsim(&["run"], None).status.code(), Some(2));
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let (cfg, _) = hcsim::config::ScenarioConfig::load(&path).unwrap();
        cfg.resolve()
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 2);
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn bundled_free_config_reports_l1_series() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hcsim(
        &["run", bundled("equivariance_free.toml").to_str().unwrap()],
        Some(tmp.path()),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(
        &std::fs::read(tmp.path().join("equivariance_free/report.json")).unwrap(),
    )
    .unwrap();
    let series = report["equivariance"].as_array().unwrap();
    assert_eq!(series.len(), 5);
    assert!(series
        .iter()
        .all(|e| e["l1"].as_f64().unwrap() <= 2.0 * e["floor"].as_f64().unwrap()));
}

#[test]
fn bundled_measurement_manifest_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("measurement_default.toml");
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let root = tmp.path().join(name);
        let out = hcsim(&["run", cfg.to_str().unwrap()], Some(&root));
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        manifests.push(std::fs::read(root.join("measurement_default/manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    let m: serde_json::Value = serde_json::from_slice(&manifests[0]).unwrap();
    assert!(m["files"]["record.json"]["sha256"].is_string());
}
