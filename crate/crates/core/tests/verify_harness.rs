//! The verifier must pass faithful circuits and catch a skewed one.

use spikewalk_core::harness::{compare_with_oracle, compare_with_oracle_using, ScenarioConfig, Status, VerifyOptions};

fn particle(walkers: usize) -> ScenarioConfig {
    ScenarioConfig::from_json(&format!(
        r#"{{"method": "particle", "seed": 3, "steps": 60,
            "particle": {{"dims": 1, "moduli": [[5, 7, 11]], "walkers": {walkers}, "p_neg": [0.25], "p_pos": [0.25]}}}}"#
    ))
    .unwrap()
}

fn ring() -> ScenarioConfig {
    ScenarioConfig::from_json(
        r#"{"method": "density", "seed": 8, "steps": 20, "density": {
            "topology": {"cycle": {"n": 12}}, "dir_probs": [0.3, 0.5],
            "initial": [{"node": 0, "count": 40}], "checkpoints": [5, 20]}}"#,
    )
    .unwrap()
}

#[test]
fn faithful_particle_circuit_passes() {
    let report = compare_with_oracle(&particle(1500));
    assert!(report.passed, "{report:#?}");
    assert_eq!(report.check("variance_dim0").unwrap().status, Status::Pass);
}

#[test]
fn skewed_particle_circuit_fails() {
    let options = VerifyOptions { probability_skew: 0.1, replicas: None };
    let report = compare_with_oracle_using(&particle(1500), options);
    assert!(!report.passed);
    assert_eq!(report.check("mean_dim0").unwrap().status, Status::Fail);
}

#[test]
fn small_ensembles_skip_the_variance_band() {
    let report = compare_with_oracle(&particle(50));
    assert_eq!(report.check("variance_dim0").unwrap().status, Status::Skip);
    assert!(report.check("variance_test_dim0").is_some());
}

#[test]
fn faithful_density_circuit_passes() {
    let report = compare_with_oracle(&ring());
    assert!(report.passed, "{report:#?}");
    for name in ["conservation", "routing_audit", "transition_frequencies", "oracle_equivalence_step20"] {
        assert_eq!(report.check(name).unwrap().status, Status::Pass, "{name}");
    }
}

#[test]
fn skewed_density_circuit_fails() {
    let options = VerifyOptions { probability_skew: 0.15, replicas: None };
    let report = compare_with_oracle_using(&ring(), options);
    assert!(!report.passed);
    assert_eq!(report.check("transition_frequencies").unwrap().status, Status::Fail);
    // skew moves mass between neighbours; totals stay exact
    assert_eq!(report.check("conservation").unwrap().status, Status::Pass);
}
