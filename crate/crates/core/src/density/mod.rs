//! Density method: each graph node is a counting unit whose counter holds the
//! number of walkers there. A macro-step counts every unit out through its
//! routing tree into its neighbours.
//!
//! In synchronized mode arrivals land in per-unit buffers and are moved into
//! the counters by a separate flush phase, so every walker takes exactly one
//! step per macro-step. Without buffers, arrivals go straight into destination
//! counters and can be counted out again in the same phase; a walker that
//! arrives on the tick right after its destination finished counting cancels
//! the counter's overshoot and is lost, so conservation only holds in
//! synchronized mode.

mod circuit;
mod graph;

pub use circuit::{sample_gate_tree, Buffer, GateNeuron, GateTree, OutputGate, UnitCircuit};
pub use graph::{build_grid_topology, redistribute_blocked, GridEmbedding, TransitionGraph, DIRECTIONS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NetworkBuilder, NetworkError, NeuronId, NeuronSpec, SpikeEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("invalid transition graph: {0}")]
    InvalidGraph(String),
    #[error("initial counts cover {got} nodes, graph has {expected}")]
    CountLength { expected: usize, got: usize },
    #[error("{phase} phase of macro-step {step} did not settle within {budget} ticks")]
    Stuck { step: u64, phase: Phase, budget: u64 },
    #[error("macro-step {step}: {detail}")]
    Corruption { step: u64, detail: String },
    #[error("a macro-step needs a quiescent network")]
    NotQuiescent,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Distributing,
    Flushing,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Idle => "idle",
            Phase::Distributing => "distribution",
            Phase::Flushing => "flush",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub step: u64,
    pub counts: Vec<u64>,
    /// Ticks of the whole macro-step; the two phases are also given separately.
    pub ticks: u64,
    pub distribution_ticks: u64,
    pub flush_ticks: u64,
    pub spikes: u64,
    pub failed_draws: u64,
}

impl DensitySnapshot {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Output-gate spikes seen during one distribution phase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingAudit {
    /// Walkers each unit held when the phase started.
    pub counted: Vec<u64>,
    /// `routed[unit][j]`: spikes of the unit's `j`-th output gate.
    pub routed: Vec<Vec<u64>>,
    /// Units whose output spikes were not one per tick on exactly `counted` ticks.
    pub violations: Vec<usize>,
}

impl RoutingAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct MacroStepLog {
    pub snapshot: DensitySnapshot,
    pub audit: RoutingAudit,
    /// Empty unless event recording is on.
    pub events: Vec<SpikeEvent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Output { unit: usize, index: usize },
    Other,
}

/// One spiking network implementing a density walk on a graph, plus the host
/// controller that triggers phases and detects their completion.
#[derive(Clone, Debug)]
pub struct DensitySystem {
    net: Network,
    graph: TransitionGraph,
    units: Vec<UnitCircuit>,
    completion: NeuronId,
    synchronized: bool,
    phase: Phase,
    step: u64,
    roles: Vec<Role>,
    record_events: bool,
}

impl DensitySystem {
    /// Builds one unit per node, installs `initial_counts` as negative counter
    /// potentials and settles the network.
    pub fn new(
        graph: TransitionGraph,
        initial_counts: &[u64],
        synchronized: bool,
        seed: u64,
    ) -> Result<Self, DensityError> {
        graph.validate()?;
        let n = graph.node_count();
        if initial_counts.len() != n {
            return Err(DensityError::CountLength { expected: n, got: initial_counts.len() });
        }
        let mut b = NetworkBuilder::new();
        let units = (0..n)
            .map(|node| circuit::add_unit(&mut b, node, graph.row(node), synchronized))
            .collect::<Result<Vec<_>, _>>()?;
        circuit::connect_outputs(&mut b, &units);
        // Counters and buffers each fire twice per phase, so half weights make
        // the completion neuron fire once every unit has settled.
        let completion = b.add_neuron(NeuronSpec::new(n as f64).with_decay(0.0).gated());
        for unit in &units {
            b.connect(unit.counter, completion, 0.5, 1);
            if let Some(buffer) = unit.buffer {
                b.connect(buffer.counter, completion, 0.5, 1);
            }
        }
        let mut roles = vec![Role::Other; b.neuron_count()];
        for (u, unit) in units.iter().enumerate() {
            for (index, out) in unit.outputs.iter().enumerate() {
                roles[out.neuron.index()] = Role::Output { unit: u, index };
            }
        }
        let mut net = b.build(seed)?;
        for (unit, &count) in units.iter().zip(initial_counts) {
            if count > 0 {
                net.inject_now(unit.counter, -(count as f64))?;
            }
        }
        net.run_until_quiescent(2);
        Ok(Self {
            net,
            graph,
            units,
            completion,
            synchronized,
            phase: Phase::Idle,
            step: 0,
            roles,
            record_events: false,
        })
    }

    /// Keep every spike event in the returned [`MacroStepLog`]s.
    pub fn record_events(&mut self, on: bool) {
        self.record_events = on;
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn graph(&self) -> &TransitionGraph {
        &self.graph
    }

    pub fn units(&self) -> &[UnitCircuit] {
        &self.units
    }

    pub fn completion_neuron(&self) -> NeuronId {
        self.completion
    }

    pub fn synchronized(&self) -> bool {
        self.synchronized
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn read_neuron_count(&self, neuron: NeuronId) -> Result<u64, DensityError> {
        let v = -self.net.potential(neuron)?;
        let rounded = v.round();
        if (v - rounded).abs() > 1e-9 || rounded < 0.0 {
            return Err(DensityError::Corruption {
                step: self.step,
                detail: format!("neuron {neuron} holds potential {}", -v),
            });
        }
        Ok(rounded as u64)
    }

    /// Walker count of every node, read as `-potential(counter)`.
    pub fn read_counts(&self) -> Result<Vec<u64>, DensityError> {
        self.units.iter().map(|u| self.read_neuron_count(u.counter)).collect()
    }

    pub fn snapshot(&self) -> Result<DensitySnapshot, DensityError> {
        Ok(DensitySnapshot {
            step: self.step,
            counts: self.read_counts()?,
            ticks: 0,
            distribution_ticks: 0,
            flush_ticks: 0,
            spikes: 0,
            failed_draws: 0,
        })
    }

    fn tick_budget(&self) -> u64 {
        let total: u64 = self.units.iter().map(|u| self.read_neuron_count(u.counter).unwrap_or(0)).sum::<u64>()
            + self
                .units
                .iter()
                .filter_map(|u| u.buffer)
                .map(|b| self.read_neuron_count(b.counter).unwrap_or(0))
                .sum::<u64>();
        let depth = self.units.iter().map(|u| u.tree.depth() as u64).max().unwrap_or(0);
        2 * total + 4 * depth + 64
    }

    /// Runs one phase to quiescence and checks the completion neuron fired once.
    fn run_phase(&mut self, phase: Phase, events: &mut Vec<SpikeEvent>) -> Result<u64, DensityError> {
        self.phase = phase;
        let budget = self.tick_budget();
        let start_tick = self.net.tick();
        let start_len = events.len();
        if !self.net.run_until_quiescent_into(budget, events) {
            return Err(DensityError::Stuck { step: self.step + 1, phase, budget });
        }
        let completions = events[start_len..]
            .iter()
            .filter(|e| e.neuron == self.completion && e.fired())
            .count();
        if completions != 1 {
            return Err(DensityError::Corruption {
                step: self.step + 1,
                detail: format!("completion neuron fired {completions} times in the {phase} phase"),
            });
        }
        Ok(self.net.tick() - start_tick)
    }

    /// One walk step for every walker: count out and route (and, synchronized,
    /// flush the buffers), then read the new counts.
    pub fn run_macro_step(&mut self) -> Result<MacroStepLog, DensityError> {
        if !self.net.is_quiescent() {
            return Err(DensityError::NotQuiescent);
        }
        let counted = self.read_counts()?;
        let mut events = Vec::new();

        let now = self.net.tick();
        for unit in &self.units {
            self.net.inject(unit.generator, 1.0, now)?;
            // zero-weight arrival: lets an empty counter report
            self.net.inject(unit.counter, 0.0, now)?;
        }
        let distribution_ticks = self.run_phase(Phase::Distributing, &mut events)?;
        let audit = self.audit(&counted, &events);

        let mut flush_ticks = 0;
        if self.synchronized {
            for (u, unit) in self.units.iter().enumerate() {
                if self.net.potential(unit.counter)? != 0.0 {
                    return Err(DensityError::Corruption {
                        step: self.step + 1,
                        detail: format!("counter of node {u} did not return to 0"),
                    });
                }
            }
            let now = self.net.tick();
            for buffer in self.units.iter().filter_map(|u| u.buffer) {
                self.net.inject(buffer.control, 1.0, now)?;
                self.net.inject(buffer.counter, 0.0, now)?;
            }
            flush_ticks = self.run_phase(Phase::Flushing, &mut events)?;
        }
        self.phase = Phase::Idle;
        self.step += 1;

        let failed_draws = events.iter().filter(|e| !e.fired()).count() as u64;
        let snapshot = DensitySnapshot {
            step: self.step,
            counts: self.read_counts()?,
            ticks: distribution_ticks + flush_ticks,
            distribution_ticks,
            flush_ticks,
            spikes: events.len() as u64 - failed_draws,
            failed_draws,
        };
        if !self.record_events {
            events = Vec::new();
        }
        Ok(MacroStepLog { snapshot, audit, events })
    }

    /// Each counted walker must produce exactly one output-gate spike, and since
    /// every leaf fires a fixed delay after its generator spike, a unit's output
    /// spikes must fall on `counted` distinct ticks.
    fn audit(&self, counted: &[u64], events: &[SpikeEvent]) -> RoutingAudit {
        let mut routed: Vec<Vec<u64>> = self.units.iter().map(|u| vec![0; u.outputs.len()]).collect();
        let mut ticks: Vec<Vec<u64>> = vec![Vec::new(); self.units.len()];
        for e in events.iter().filter(|e| e.fired()) {
            if let Role::Output { unit, index } = self.roles[e.neuron.index()] {
                routed[unit][index] += 1;
                ticks[unit].push(e.tick);
            }
        }
        let violations = (0..self.units.len())
            .filter(|&u| {
                let t = &mut ticks[u];
                t.sort_unstable();
                t.dedup();
                let total: u64 = routed[u].iter().sum();
                total != counted[u] || t.len() as u64 != counted[u]
            })
            .collect();
        RoutingAudit { counted: counted.to_vec(), routed, violations }
    }
}
