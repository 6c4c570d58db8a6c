//! Circuit-versus-oracle comparison. Failures are report entries, never errors.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{Method, ScenarioConfig};
use crate::density::{DensitySystem, TransitionGraph};
use crate::oracle::{analytic_mean, analytic_variance, oracle_density_walk, oracle_particle_walk};
use crate::particle::{simulate_ensemble, Action, MovePolicy, ParticleSystem};
use crate::stats::{chi_square_gof, chi_square_homogeneity, chi_square_sf, displacement_stats, GofResult};
use crate::{residue, seed};

/// Significance level for every hypothesis test in the report.
pub const ALPHA: f64 = 0.01;
/// Relative tolerance on the displacement variance.
pub const VARIANCE_TOLERANCE: f64 = 0.05;
/// Below this ensemble size the variance band is skipped: sampling noise
/// alone exceeds it too often.
pub const MIN_BAND_WALKERS: usize = 1000;
/// Width of the mean-displacement band, in standard errors.
pub const MEAN_BAND: f64 = 4.0;
/// Target number of pooled walker samples for density comparisons.
pub const DENSITY_SAMPLES: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gof: Option<GofResult>,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if passed { Status::Pass } else { Status::Fail },
            detail: detail.into(),
            gof: None,
        }
    }

    fn skip(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: Status::Skip, detail: detail.into(), gof: None }
    }

    fn test(name: impl Into<String>, gof: GofResult) -> Self {
        Self {
            name: name.into(),
            status: if gof.p_value > ALPHA { Status::Pass } else { Status::Fail },
            detail: format!("p = {:.4}", gof.p_value),
            gof: Some(gof),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub name: String,
    pub method: Method,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Test hooks. `probability_skew` moves that much probability mass inside the
/// circuit only (toward the positive direction for particles, from the last to
/// the first neighbour for density units), leaving the oracle untouched.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VerifyOptions {
    pub probability_skew: f64,
    /// Density replicas; by default enough to pool [`DENSITY_SAMPLES`] walkers.
    pub replicas: Option<usize>,
}

pub fn compare_with_oracle(config: &ScenarioConfig) -> VerifyReport {
    compare_with_oracle_using(config, VerifyOptions::default())
}

pub fn compare_with_oracle_using(config: &ScenarioConfig, options: VerifyOptions) -> VerifyReport {
    let checks = match config.validate() {
        Err(e) => vec![Check::new("scenario", false, e.to_string())],
        Ok(()) => match config.method {
            Method::Particle => verify_particle(config, options),
            Method::Density => verify_density(config, options),
        },
    };
    let passed = checks.iter().all(|c| c.status != Status::Fail);
    VerifyReport { name: config.name.clone(), method: config.method, seed: config.seed, checks, passed }
}

fn skewed_policy(policy: &MovePolicy, skew: f64) -> MovePolicy {
    let mut p = policy.clone();
    for d in &mut p.dims {
        let moved = skew.min(d.p_neg);
        d.p_neg -= moved;
        d.p_pos += moved;
    }
    p
}

fn histogram(values: impl Iterator<Item = i64>) -> BTreeMap<i64, u64> {
    let mut h = BTreeMap::new();
    for v in values {
        *h.entry(v).or_insert(0) += 1;
    }
    h
}

fn aligned(a: &BTreeMap<i64, u64>, b: &BTreeMap<i64, u64>) -> (Vec<u64>, Vec<u64>) {
    let keys: Vec<i64> = a.keys().chain(b.keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    (
        keys.iter().map(|k| a.get(k).copied().unwrap_or(0)).collect(),
        keys.iter().map(|k| b.get(k).copied().unwrap_or(0)).collect(),
    )
}

fn verify_particle(config: &ScenarioConfig, options: VerifyOptions) -> Vec<Check> {
    let moduli = config.moduli().expect("validated");
    let policy = config.policy().expect("validated");
    let circuit_policy = skewed_policy(&policy, options.probability_skew);
    let k = config.walkers();
    let t = config.steps;
    let mut checks = Vec::new();

    let circuit = match simulate_ensemble(
        &moduli,
        &circuit_policy,
        k,
        t,
        seed::derive_seed(config.seed, "verify-circuit", 0),
        64,
        false,
    ) {
        Ok(c) => c,
        Err(e) => return vec![Check::new("circuit_run", false, e.to_string())],
    };
    let capacities: Vec<u64> = moduli.iter().map(|m| residue::capacity(m).expect("validated")).collect();
    let mut oracle = oracle_particle_walk(seed::derive_seed(config.seed, "verify-oracle", 0), &policy, t, k, false);
    for trace in &mut oracle {
        for pos in &mut trace.positions {
            for (x, &cap) in pos.iter_mut().zip(&capacities) {
                *x = residue::signed_wrap(*x, cap);
            }
        }
    }

    if k < 2 {
        checks.push(Check::skip("displacement", "needs at least two walkers"));
    } else {
        let stats = displacement_stats(&circuit).expect("nonempty");
        for (d, probs) in policy.dims.iter().enumerate() {
            let var = analytic_variance(*probs, t);
            let mean = analytic_mean(*probs, t);
            let s2 = stats.variance[d];
            let name = format!("variance_dim{d}");
            checks.push(if k < MIN_BAND_WALKERS && var > 0.0 {
                Check::skip(name, format!("sample {s2:.4}; band needs at least {MIN_BAND_WALKERS} walkers"))
            } else {
                Check::new(
                    name,
                    if var > 0.0 { (s2 - var).abs() <= VARIANCE_TOLERANCE * var } else { s2 == 0.0 },
                    format!("sample {s2:.4}, analytic {var:.4}"),
                )
            });
            if var > 0.0 {
                // (K - 1) s^2 / sigma^2 ~ chi^2(K - 1), two-sided
                let stat = (k as f64 - 1.0) * s2 / var;
                let upper = chi_square_sf(stat, k - 1);
                let p = (2.0 * upper.min(1.0 - upper)).min(1.0);
                checks.push(Check::test(
                    format!("variance_test_dim{d}"),
                    GofResult { statistic: stat, degrees_of_freedom: k - 1, p_value: p },
                ));
            }
            let band = MEAN_BAND * (var / k as f64).sqrt();
            checks.push(Check::new(
                format!("mean_dim{d}"),
                (stats.mean[d] - mean).abs() <= band,
                format!("sample {:.4}, analytic {mean:.4}, band {band:.4}", stats.mean[d]),
            ));
            let (a, b) = aligned(
                &histogram(circuit.iter().map(|tr| tr.final_position()[d])),
                &histogram(oracle.iter().map(|tr| tr.final_position()[d])),
            );
            checks.push(match chi_square_homogeneity(&a, &b) {
                Ok(gof) => Check::test(format!("oracle_equivalence_dim{d}"), gof),
                Err(e) => Check::new(format!("oracle_equivalence_dim{d}"), false, e.to_string()),
            });
        }
    }
    checks.push(particle_accounting(config, &moduli, &circuit_policy));
    checks
}

/// Spike budget and offset ledger on a small system run alongside the ensemble.
fn particle_accounting(config: &ScenarioConfig, moduli: &[Vec<u64>], policy: &MovePolicy) -> Check {
    let walkers = config.walkers().min(64);
    let run = || -> Result<(usize, usize), String> {
        let mut sys = ParticleSystem::new(moduli.to_vec(), policy.clone(), 0..walkers, seed::derive_seed(config.seed, "verify-accounting", 0))
            .map_err(|e| e.to_string())?;
        let mut truth = vec![vec![0i64; moduli.len()]; walkers];
        let (mut budget_errors, mut ledger_errors) = (0, 0);
        for _ in 0..config.steps {
            let rec = sys.macro_step(None).map_err(|e| e.to_string())?;
            let (tallies, reference) = sys.tally(&rec.events);
            for (d, m) in moduli.iter().enumerate() {
                if reference[d] != m.len() {
                    budget_errors += 1;
                }
            }
            let positions = sys.read_positions().map_err(|e| e.to_string())?;
            for w in 0..walkers {
                for (d, m) in moduli.iter().enumerate() {
                    let action = rec.actions[w][d];
                    let expected = if action == Action::Stay { m.len() } else { 2 * m.len() + 1 };
                    if tallies[w][d].total() != expected {
                        budget_errors += 1;
                    }
                    truth[w][d] += action.delta();
                    let cap = residue::capacity(m).expect("validated");
                    if positions[w][d] != residue::signed_wrap(truth[w][d], cap) {
                        ledger_errors += 1;
                    }
                }
            }
        }
        Ok((budget_errors, ledger_errors))
    };
    match run() {
        Ok((b, l)) => Check::new(
            "spike_accounting",
            b == 0 && l == 0,
            format!("{walkers} walkers: {b} spike-budget mismatches, {l} offset-ledger mismatches"),
        ),
        Err(e) => Check::new("spike_accounting", false, e),
    }
}

fn skewed_graph(graph: &TransitionGraph, skew: f64) -> TransitionGraph {
    if skew <= 0.0 {
        return graph.clone();
    }
    let rows = graph
        .rows()
        .iter()
        .map(|row| {
            let mut row = row.clone();
            if row.len() >= 2 {
                let last = row.len() - 1;
                let moved = skew.min(row[last].1);
                row[last].1 -= moved;
                row[0].1 += moved;
            }
            row
        })
        .collect();
    TransitionGraph::from_rows(rows).expect("skew preserves row sums")
}

struct ReplicaResult {
    totals_ok: bool,
    obstacle_ok: bool,
    audit_failures: usize,
    /// `[checkpoint][node]`
    at_checkpoints: Vec<Vec<u64>>,
    /// `[node][j]` routed and `[node]` counted, summed over steps.
    routed: Vec<Vec<u64>>,
    counted: Vec<u64>,
}

fn verify_density(config: &ScenarioConfig, options: VerifyOptions) -> Vec<Check> {
    let graph = config.graph().expect("validated");
    let counts = config.initial_counts(&graph).expect("validated");
    let synchronized = config.density.as_ref().is_none_or(|d| d.synchronized);
    let checkpoints = config.checkpoints();
    let total: u64 = counts.iter().sum();
    let replicas = options
        .replicas
        .unwrap_or_else(|| DENSITY_SAMPLES.div_ceil(total.max(1)).clamp(1, 200) as usize);
    let circuit_graph = skewed_graph(&graph, options.probability_skew);
    let obstacles: Vec<usize> = (0..graph.node_count()).filter(|&n| graph.is_obstacle(n)).collect();

    let results: Result<Vec<ReplicaResult>, String> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut sys = DensitySystem::new(
                circuit_graph.clone(),
                &counts,
                synchronized,
                seed::derive_seed(config.seed, "verify-circuit", r as u64),
            )
            .map_err(|e| e.to_string())?;
            let mut res = ReplicaResult {
                totals_ok: true,
                obstacle_ok: true,
                audit_failures: 0,
                at_checkpoints: Vec::new(),
                routed: graph.rows().iter().map(|row| vec![0; row.len()]).collect(),
                counted: vec![0; graph.node_count()],
            };
            for step in 1..=config.steps {
                let log = sys.run_macro_step().map_err(|e| e.to_string())?;
                let c = &log.snapshot.counts;
                res.totals_ok &= c.iter().sum::<u64>() == total;
                res.obstacle_ok &= obstacles.iter().all(|&o| c[o] == 0);
                res.audit_failures += log.audit.violations.len();
                for (node, routed) in log.audit.routed.iter().enumerate() {
                    res.counted[node] += log.audit.counted[node];
                    // outputs follow the row order with zero entries pruned
                    let dests: Vec<usize> = sys.units()[node].outputs.iter().map(|o| o.destination).collect();
                    for (j, &n) in routed.iter().enumerate() {
                        if let Some(k) = graph.row(node).iter().position(|&(d, _)| d == dests[j]) {
                            res.routed[node][k] += n;
                        }
                    }
                }
                if checkpoints.contains(&step) {
                    res.at_checkpoints.push(c.clone());
                }
            }
            Ok(res)
        })
        .collect();
    let results = match results {
        Ok(r) => r,
        Err(e) => return vec![Check::new("circuit_run", false, e)],
    };

    let mut checks = vec![Check::new(
        "conservation",
        results.iter().all(|r| r.totals_ok),
        format!("{replicas} replicas x {} steps, total {total}", config.steps),
    )];
    if !obstacles.is_empty() {
        checks.push(Check::new(
            "obstacle_exclusion",
            results.iter().all(|r| r.obstacle_ok),
            format!("{} obstacle nodes", obstacles.len()),
        ));
    }
    let audit_failures: usize = results.iter().map(|r| r.audit_failures).sum();
    checks.push(Check::new(
        "routing_audit",
        audit_failures == 0,
        format!("{audit_failures} unit-phases with output spikes not matching the count"),
    ));

    // Routed walkers against the true transition probabilities. Nodes with the
    // same row probabilities are pooled; each pool is an independent test and
    // their statistics and degrees of freedom add.
    let mut pools: BTreeMap<Vec<u64>, (Vec<u64>, u64, Vec<f64>)> = BTreeMap::new();
    for node in 0..graph.node_count() {
        let row = graph.row(node);
        let counted: u64 = results.iter().map(|r| r.counted[node]).sum();
        if counted == 0 || row.len() < 2 {
            continue;
        }
        let key: Vec<u64> = row.iter().map(|&(_, p)| p.to_bits()).collect();
        let pool = pools
            .entry(key)
            .or_insert_with(|| (vec![0; row.len()], 0, row.iter().map(|&(_, p)| p).collect()));
        for (k, acc) in pool.0.iter_mut().enumerate() {
            *acc += results.iter().map(|r| r.routed[node][k]).sum::<u64>();
        }
        pool.1 += counted;
    }
    let mut combined: Result<(f64, usize), String> = Ok((0.0, 0));
    for (observed, counted, probs) in pools.values() {
        let expected: Vec<f64> = probs.iter().map(|p| *counted as f64 * p).collect();
        combined = combined.and_then(|(stat, dof)| {
            let gof = chi_square_gof(observed, &expected).map_err(|e| e.to_string())?;
            Ok((stat + gof.statistic, dof + gof.degrees_of_freedom))
        });
    }
    checks.push(match combined {
        _ if pools.is_empty() => Check::skip("transition_frequencies", "no stochastic routing took place"),
        Ok((statistic, dof)) => Check::test(
            "transition_frequencies",
            GofResult { statistic, degrees_of_freedom: dof, p_value: chi_square_sf(statistic, dof) },
        ),
        Err(e) => Check::new("transition_frequencies", false, e),
    });

    let horizon = checkpoints.last().copied().unwrap_or(0);
    let oracle_runs: Vec<_> = (0..replicas)
        .into_par_iter()
        .map(|r| oracle_density_walk(&graph, &counts, horizon, seed::derive_seed(config.seed, "verify-oracle", r as u64)))
        .collect();
    for (i, &step) in checkpoints.iter().enumerate() {
        let n = graph.node_count();
        let mut circuit = vec![0u64; n];
        let mut oracle = vec![0u64; n];
        for (r, res) in results.iter().enumerate() {
            for (acc, &c) in circuit.iter_mut().zip(&res.at_checkpoints[i]) {
                *acc += c;
            }
            for (acc, &c) in oracle.iter_mut().zip(&oracle_runs[r].counts[step as usize]) {
                *acc += c;
            }
        }
        let name = format!("oracle_equivalence_step{step}");
        checks.push(match chi_square_homogeneity(&circuit, &oracle) {
            Ok(gof) => Check::test(name, gof),
            Err(e) => Check::new(name, false, e.to_string()),
        });
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skew_moves_mass() {
        let p = skewed_policy(&MovePolicy::uniform(1, 0.25, 0.25), 0.2);
        assert!((p.dims[0].p_neg - 0.05).abs() < 1e-12 && (p.dims[0].p_pos - 0.45).abs() < 1e-12);
        let g = TransitionGraph::cycle(4, 0.5, 0.5).unwrap();
        let s = skewed_graph(&g, 0.3);
        assert!((s.row(0)[0].1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn aligned_histograms() {
        let a = histogram([1, 1, 3].into_iter());
        let b = histogram([2, 3].into_iter());
        assert_eq!(aligned(&a, &b), (vec![2, 0, 1], vec![0, 1, 1]));
    }

    #[test]
    fn small_particle_report_has_accounting() {
        let c = ScenarioConfig::from_json(
            r#"{"method": "particle", "seed": 3, "steps": 10,
                "particle": {"dims": 1, "moduli": [[5, 7]], "walkers": 1, "p_neg": [0.3], "p_pos": [0.3]}}"#,
        )
        .unwrap();
        let r = compare_with_oracle(&c);
        assert_eq!(r.check("displacement").unwrap().status, Status::Skip);
        assert_eq!(r.check("spike_accounting").unwrap().status, Status::Pass);
        assert!(r.passed);
    }
}
