//! Running a scenario and collecting everything needed for export.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scenario::{Method, ScenarioConfig, ScenarioError};
use super::verify::VerifyReport;
use crate::density::{DensityError, DensitySnapshot, DensitySystem, GridEmbedding};
use crate::network::SpikeEvent;
use crate::oracle::WalkTrace;
use crate::particle::{ParticleError, ParticleSystem};
use crate::{residue, seed};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("particle circuit failed at macro-step {step}: {source}")]
    Particle {
        step: u64,
        #[source]
        source: ParticleError,
    },
    #[error("density circuit failed at macro-step {step}: {source}")]
    Density {
        step: u64,
        #[source]
        source: DensityError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub ticks: u64,
    pub spikes: u64,
    pub failed_draws: u64,
}

/// A step where the decoded position differs from the true one because the
/// walker left the code's range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapEvent {
    pub walker_id: usize,
    pub step: u64,
    pub dim: usize,
    pub true_position: i64,
    pub decoded: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleOutput {
    pub capacities: Vec<u64>,
    /// Decoded from the circuit.
    pub traces: Vec<WalkTrace>,
    /// Accumulated from the chosen actions, without wrapping.
    pub true_traces: Vec<WalkTrace>,
    pub wraparounds: Vec<WrapEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityOutput {
    pub snapshots: Vec<DensitySnapshot>,
    pub grid: Option<GridEmbedding>,
    pub probes: Vec<usize>,
    /// Steps whose routing audit found a unit with the wrong output spikes.
    pub audit_failures: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MethodOutput {
    Particle(ParticleOutput),
    Density(DensityOutput),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputBundle {
    pub config: ScenarioConfig,
    pub neurons: usize,
    pub synapses: usize,
    pub output: MethodOutput,
    pub spikes: Vec<SpikeEvent>,
    pub steps: Vec<StepRecord>,
    pub report: Option<VerifyReport>,
}

impl OutputBundle {
    /// Nothing recorded, not even the initial state.
    pub fn is_empty(&self) -> bool {
        match &self.output {
            MethodOutput::Particle(p) => p.traces.iter().all(|t| t.positions.is_empty()),
            MethodOutput::Density(d) => d.snapshots.is_empty(),
        }
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<OutputBundle, RunError> {
    config.validate()?;
    match config.method {
        Method::Particle => run_particle(config),
        Method::Density => run_density(config),
    }
}

/// `repeats` independent runs; run 0 uses the scenario seed, run `i` a seed
/// derived from it.
pub fn run_replicas(config: &ScenarioConfig, repeats: usize) -> Result<Vec<OutputBundle>, RunError> {
    (0..repeats.max(1))
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            if i > 0 {
                c.seed = seed::derive_seed(config.seed, "replica", i as u64);
            }
            run_scenario(&c)
        })
        .collect()
}

fn run_particle(config: &ScenarioConfig) -> Result<OutputBundle, RunError> {
    let moduli = config.moduli()?;
    let policy = config.policy()?;
    let walkers = config.walkers();
    let capacities: Vec<u64> = moduli
        .iter()
        .map(|m| residue::capacity(m).expect("validated moduli"))
        .collect();
    let err = |step| move |source| RunError::Particle { step, source };

    let mut sys = ParticleSystem::new(moduli.clone(), policy, 0..walkers, config.seed).map_err(err(0))?;
    let start = sys.read_positions().map_err(err(0))?;
    let mut traces: Vec<WalkTrace> = start
        .iter()
        .enumerate()
        .map(|(id, p)| WalkTrace { walker_id: id, positions: vec![p.clone()] })
        .collect();
    let mut true_traces = traces.clone();
    let mut spikes = Vec::new();
    let mut steps = Vec::new();
    let mut wraparounds = Vec::new();

    for step in 1..=config.steps {
        let record = sys.macro_step(None).map_err(err(step))?;
        let decoded = sys.read_positions().map_err(err(step))?;
        for (w, actions) in record.actions.iter().enumerate() {
            let prev = true_traces[w].positions.last().expect("initial position recorded").clone();
            let next: Vec<i64> = prev.iter().zip(actions).map(|(x, a)| x + a.delta()).collect();
            for (dim, (&t, &d)) in next.iter().zip(&decoded[w]).enumerate() {
                if t != d {
                    wraparounds.push(WrapEvent { walker_id: w, step, dim, true_position: t, decoded: d });
                }
            }
            true_traces[w].positions.push(next);
            traces[w].positions.push(decoded[w].clone());
        }
        let failed = record.events.iter().filter(|e| !e.fired()).count() as u64;
        steps.push(StepRecord {
            step,
            ticks: 2,
            spikes: record.events.len() as u64 - failed,
            failed_draws: failed,
        });
        spikes.extend(record.events);
    }
    Ok(OutputBundle {
        config: config.clone(),
        neurons: sys.network().neuron_count(),
        synapses: sys.network().synapse_count(),
        output: MethodOutput::Particle(ParticleOutput { capacities, traces, true_traces, wraparounds }),
        spikes,
        steps,
        report: None,
    })
}

fn run_density(config: &ScenarioConfig) -> Result<OutputBundle, RunError> {
    let graph = config.graph()?;
    let counts = config.initial_counts(&graph)?;
    let probes = config.probe_nodes(&graph)?;
    let synchronized = config.density.as_ref().is_none_or(|d| d.synchronized);
    let grid = graph.grid().cloned();
    let mut sys = DensitySystem::new(graph, &counts, synchronized, config.seed)
        .map_err(|source| RunError::Density { step: 0, source })?;
    sys.record_events(true);

    let mut snapshots = vec![sys.snapshot().map_err(|source| RunError::Density { step: 0, source })?];
    let mut spikes = Vec::new();
    let mut steps = Vec::new();
    let mut audit_failures = Vec::new();
    for step in 1..=config.steps {
        let log = sys.run_macro_step().map_err(|source| RunError::Density { step, source })?;
        if !log.audit.passed() {
            audit_failures.push(step);
        }
        steps.push(StepRecord {
            step,
            ticks: log.snapshot.ticks,
            spikes: log.snapshot.spikes,
            failed_draws: log.snapshot.failed_draws,
        });
        snapshots.push(log.snapshot);
        spikes.extend(log.events);
    }
    Ok(OutputBundle {
        config: config.clone(),
        neurons: sys.network().neuron_count(),
        synapses: sys.network().synapse_count(),
        output: MethodOutput::Density(DensityOutput { snapshots, grid, probes, audit_failures }),
        spikes,
        steps,
        report: None,
    })
}
