//! Direct Monte-Carlo simulation of the same walks the circuits implement.
//!
//! Sampling deliberately differs from the circuits: particle steps use a
//! weighted-index draw and density steps a multinomial split built from binomial
//! draws. Streams are keyed separately from every circuit stream.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::TransitionGraph;
use crate::particle::{DirectionProbs, MovePolicy};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkTrace {
    pub walker_id: usize,
    /// `positions[k]` is the position after `k` recorded steps.
    pub positions: Vec<Vec<i64>>,
}

impl WalkTrace {
    pub fn final_position(&self) -> &[i64] {
        self.positions.last().map_or(&[], Vec::as_slice)
    }
}

/// `counts[step][node]`, step 0 being the initial placement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensitySeries {
    pub counts: Vec<Vec<u64>>,
}

impl DensitySeries {
    pub fn totals(&self) -> Vec<u64> {
        self.counts.iter().map(|c| c.iter().sum()).collect()
    }
}

/// Variance of one dimension's displacement after `steps` steps:
/// `T (p_pos + p_neg - (p_pos - p_neg)^2)`.
pub fn analytic_variance(probs: DirectionProbs, steps: u64) -> f64 {
    let (n, p) = (probs.p_neg, probs.p_pos);
    steps as f64 * (p + n - (p - n).powi(2))
}

/// Expected displacement of one dimension after `steps` steps.
pub fn analytic_mean(probs: DirectionProbs, steps: u64) -> f64 {
    steps as f64 * (probs.p_pos - probs.p_neg)
}

fn walker_dists(policy: &MovePolicy) -> Vec<WeightedIndex<f64>> {
    policy
        .dims
        .iter()
        .map(|p| WeightedIndex::new([p.p_neg, p.p_pos, p.p_stay()]).expect("validated policy has positive total weight"))
        .collect()
}

const STEP: [i64; 3] = [-1, 1, 0];

/// `walkers` independent walks of `steps` steps from the origin. With
/// `full_paths` false only the initial and final positions are kept.
pub fn oracle_particle_walk(
    master_seed: u64,
    policy: &MovePolicy,
    steps: u64,
    walkers: usize,
    full_paths: bool,
) -> Vec<WalkTrace> {
    let dists = walker_dists(policy);
    let dims = dists.len();
    (0..walkers)
        .into_par_iter()
        .map(|id| {
            let mut rng = seed::rng_for(master_seed, "oracle-walker", id as u64);
            let mut pos = vec![0i64; dims];
            let mut positions = vec![pos.clone()];
            for s in 1..=steps {
                for (x, dist) in pos.iter_mut().zip(&dists) {
                    *x += STEP[dist.sample(&mut rng)];
                }
                if full_paths || s == steps {
                    positions.push(pos.clone());
                }
            }
            WalkTrace { walker_id: id, positions }
        })
        .collect()
}

/// Multinomial redistribution of `counts` over `graph` for `steps` steps.
pub fn oracle_density_walk(graph: &TransitionGraph, counts: &[u64], steps: u64, master_seed: u64) -> DensitySeries {
    let mut rng = seed::rng_for(master_seed, "oracle-density", 0);
    let mut series = vec![counts.to_vec()];
    let mut current = counts.to_vec();
    for _ in 0..steps {
        let mut next = vec![0u64; current.len()];
        for (node, &m) in current.iter().enumerate() {
            let mut remaining = m;
            let mut mass = 1.0;
            let row = graph.row(node);
            for (j, &(dest, p)) in row.iter().enumerate() {
                if remaining == 0 {
                    break;
                }
                let take = if j + 1 == row.len() || p >= mass {
                    remaining
                } else {
                    Binomial::new(remaining, (p / mass).clamp(0.0, 1.0))
                        .expect("probability clamped to [0, 1]")
                        .sample(&mut rng)
                };
                next[dest] += take;
                remaining -= take;
                mass -= p;
            }
        }
        current = next;
        series.push(current.clone());
    }
    DensitySeries { counts: series }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::displacement_stats;

    #[test]
    fn variance_formula_examples() {
        assert_eq!(analytic_variance(DirectionProbs::new(0.25, 0.25), 100), 50.0);
        assert_eq!(analytic_variance(DirectionProbs::new(0.0, 0.0), 100), 0.0);
        assert!((analytic_variance(DirectionProbs::new(0.20, 0.05), 200) - 45.5).abs() < 1e-9);
    }

    #[test]
    fn stationary_policy_stays_home() {
        let traces = oracle_particle_walk(1, &MovePolicy::uniform(2, 0.0, 0.0), 50, 20, true);
        assert!(traces.iter().all(|t| t.positions.iter().all(|p| p == &[0, 0])));
    }

    #[test]
    fn steps_move_at_most_one() {
        let traces = oracle_particle_walk(2, &MovePolicy::uniform(3, 0.3, 0.3), 40, 10, true);
        for t in &traces {
            assert_eq!(t.positions.len(), 41);
            for w in t.positions.windows(2) {
                assert!(w[0].iter().zip(&w[1]).all(|(a, b)| (a - b).abs() <= 1));
            }
        }
    }

    #[test]
    fn oracle_is_reproducible() {
        let p = MovePolicy::uniform(2, 0.2, 0.3);
        assert_eq!(oracle_particle_walk(5, &p, 30, 8, true), oracle_particle_walk(5, &p, 30, 8, true));
        assert_ne!(oracle_particle_walk(5, &p, 30, 8, true), oracle_particle_walk(6, &p, 30, 8, true));
        let g = TransitionGraph::cycle(10, 0.3, 0.3).unwrap();
        let c = [5, 0, 0, 0, 0, 5, 0, 0, 0, 0];
        assert_eq!(oracle_density_walk(&g, &c, 20, 1), oracle_density_walk(&g, &c, 20, 1));
    }

    #[test]
    fn unbiased_variance_near_fifty() {
        let traces = oracle_particle_walk(3, &MovePolicy::uniform(2, 0.25, 0.25), 100, 10_000, false);
        let stats = displacement_stats(&traces).unwrap();
        for d in 0..2 {
            assert!((stats.variance[d] - 50.0).abs() < 2.5, "{:?}", stats.variance);
        }
    }

    #[test]
    fn biased_mean_near_minus_thirty() {
        let traces = oracle_particle_walk(4, &MovePolicy::uniform(1, 0.20, 0.05), 200, 2000, false);
        let stats = displacement_stats(&traces).unwrap();
        let se = (45.5f64 / 2000.0).sqrt();
        assert!((stats.mean[0] + 30.0).abs() < 4.0 * se);
    }

    #[test]
    fn identity_graph_keeps_counts() {
        let g = TransitionGraph::from_rows(vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)]]).unwrap();
        let s = oracle_density_walk(&g, &[4, 0, 9], 10, 2);
        assert!(s.counts.iter().all(|c| c == &[4, 0, 9]));
    }

    #[test]
    fn oracle_density_checkerboard_and_conservation() {
        let g = TransitionGraph::cycle(24, 0.5, 0.5).unwrap();
        let mut c = vec![0; 24];
        c[10] = 30;
        let s = oracle_density_walk(&g, &c, 60, 8);
        for (step, counts) in s.counts.iter().enumerate() {
            assert_eq!(counts.iter().sum::<u64>(), 30);
            for (node, &n) in counts.iter().enumerate() {
                if (node + step) % 2 == 1 {
                    assert_eq!(n, 0);
                }
            }
        }
    }
}
