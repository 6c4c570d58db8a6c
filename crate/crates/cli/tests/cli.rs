use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spikewalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikewalk")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("small.json");
    fs::write(&path, body).unwrap();
    path
}

const SMALL_CYCLE: &str = r#"{"method": "density", "seed": 1, "steps": 5, "density": {
    "topology": {"cycle": {"n": 6}}, "dir_probs": [0.5, 0.5], "initial": [{"node": 0, "count": 8}]}}"#;

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_scenario(dir.path(), SMALL_CYCLE);
    let o = spikewalk(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["density.csv", "spikes.csv", "steps.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["name"], "small");
    assert_eq!(summary["conserved"], true);
}

#[test]
fn repeats_go_to_replica_directories_with_distinct_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_scenario(dir.path(), SMALL_CYCLE);
    let o = spikewalk(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--repeats", "3"]);
    assert!(o.status.success());
    let seeds: Vec<serde_json::Value> = (0..3)
        .map(|i| {
            let s = fs::read_to_string(out.join(format!("replica-{i:03}/summary.json"))).unwrap();
            serde_json::from_str::<serde_json::Value>(&s).unwrap()["seed"].clone()
        })
        .collect();
    assert_eq!(seeds[0], 1);
    assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), SMALL_CYCLE);
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        assert!(spikewalk(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]).status.success());
        fs::read(out.join("spikes.csv")).unwrap()
    };
    assert_eq!(run("9", "a"), run("9", "b"));
    assert_ne!(run("9", "a"), run("10", "c"));
}

#[test]
fn verify_passes_checked_in_density_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikewalk(&["verify", scenario("fig8_cycle_density.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.contains("PASS  conservation"));
    assert!(stdout.contains("verification passed"));
    assert!(dir.path().join("report.json").is_file());
}

#[test]
fn resources_prints_budgets() {
    let o = spikewalk(&["resources", scenario("fig4_particle_100.json").to_str().unwrap()]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let dim = &r["particle"]["dims"][0];
    assert_eq!((dim["neurons"].as_u64(), dim["synapses"].as_u64()), (Some(53), Some(235)));
    assert_eq!((dim["idle_spikes"].as_u64(), dim["move_spikes"].as_u64()), (Some(3), Some(7)));
}

#[test]
fn bad_scenario_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), r#"{"method": "particle", "steps": 3, "bogus": 1}"#);
    let o = spikewalk(&["run", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = spikewalk(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert!(!o.status.success());
}
