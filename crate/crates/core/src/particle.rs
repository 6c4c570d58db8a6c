//! Particle method: each walker owns, per dimension, a set of prime-sized ring
//! oscillators whose phase offsets against shared reference rings encode its
//! position in a residue number system.
//!
//! Ring neurons (threshold 1, reset 0, complete decay) drive the next neuron with
//! weight 1 and the neuron after it, and themselves, with weight 0.5, all with
//! delay 2, so a free ring advances one neuron every two ticks. Update neurons
//! add a paired +0.5/-0.5 on the tick the ring advances: the positive update
//! pushes the ring two neurons ahead instead of one, the negative update makes
//! the active neuron fire again. Relative to the reference that is +1 or -1.
//!
//! A macro-step is two ticks. Movement sources are injected on the even tick
//! when every ring fires, update neurons fire on the odd tick, and the resulting
//! ring state is held in the deliveries scheduled for the next even tick. Ring
//! state is read from those scheduled deliveries.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NetworkBuilder, NetworkError, NeuronId, NeuronSpec, SpikeEvent};
use crate::oracle::WalkTrace;
use crate::residue::{self, ResidueError};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    #[error("ring size {0} must be a prime of at least 3")]
    InvalidRingSize(u64),
    #[error(transparent)]
    Residue(#[from] ResidueError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid move policy: {0}")]
    InvalidPolicy(String),
    #[error("macro-step must start on an even tick, network is at tick {0}")]
    MisPhased(u64),
    #[error("{owner} dimension {dim} ring {ring} has {active} active neurons, expected exactly one")]
    RingCorrupted {
        owner: String,
        dim: usize,
        ring: usize,
        active: usize,
    },
    #[error("forced actions cover {got} walkers/dimensions, expected {expected}")]
    ForcedShape { expected: usize, got: usize },
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Number of update-neuron pairs a ring of `size` needs.
pub fn update_pair_count(size: u64) -> usize {
    3 + (size % 3) as usize
}

/// Update pair used by ring neuron `i`. Groups 0..3 repeat every three neurons;
/// the one or two neurons left over at the end of the ring get their own pair, so
/// neurons sharing a pair are always at least three apart around the ring.
pub fn update_group(i: usize, size: u64) -> usize {
    let full = 3 * (size as usize / 3);
    if i < full {
        i % 3
    } else {
        3 + (i - full)
    }
}

/// Neurons and synapses one walker needs per dimension for the given ring sizes:
/// `2 + sum(C_i + 2(3 + C_i mod 3))` and `sum(9 C_i + 2(3 + C_i mod 3))`.
pub fn resource_counts(moduli: &[u64]) -> (usize, usize) {
    moduli.iter().fold((2, 0), |(n, s), &c| {
        let c = c as usize;
        let pairs = 3 + c % 3;
        (n + c + 2 * pairs, s + 9 * c + 2 * pairs)
    })
}

/// Spikes emitted by one walker dimension in a macro-step: `M` when idle,
/// `M` ring + `M` update + 1 source when it moves.
pub fn spike_budget(moduli: &[u64]) -> (usize, usize) {
    let m = moduli.len();
    (m, 2 * m + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdatePair {
    pub positive: NeuronId,
    pub negative: NeuronId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingSpec {
    pub size: u64,
    pub neurons: Vec<NeuronId>,
    /// Empty for reference rings.
    pub update_pairs: Vec<UpdatePair>,
}

fn ring_neuron() -> NeuronSpec {
    NeuronSpec::new(1.0)
}

fn add_ring(b: &mut NetworkBuilder, size: u64, with_updates: bool) -> Result<RingSpec, ParticleError> {
    if size < 3 || !is_prime(size) {
        return Err(ParticleError::InvalidRingSize(size));
    }
    let c = size as usize;
    let neurons: Vec<NeuronId> = (0..c).map(|_| b.add_neuron(ring_neuron())).collect();
    let update_pairs: Vec<UpdatePair> = if with_updates {
        (0..update_pair_count(size))
            .map(|_| UpdatePair {
                positive: b.add_neuron(ring_neuron()),
                negative: b.add_neuron(ring_neuron()),
            })
            .collect()
    } else {
        Vec::new()
    };

    for i in 0..c {
        let here = neurons[i];
        let next = neurons[(i + 1) % c];
        let after = neurons[(i + 2) % c];
        b.connect(here, next, 1.0, 2);
        b.connect(here, after, 0.5, 2);
        b.connect(here, here, 0.5, 2);
        if with_updates {
            let pair = update_pairs[update_group(i, size)];
            b.connect(here, pair.positive, 0.5, 1);
            b.connect(here, pair.negative, 0.5, 1);
            b.connect(pair.positive, after, 0.5, 1);
            b.connect(pair.positive, next, -0.5, 1);
            b.connect(pair.negative, here, 0.5, 1);
            b.connect(pair.negative, next, -0.5, 1);
        }
    }
    Ok(RingSpec {
        size,
        neurons,
        update_pairs,
    })
}

/// Ring with update neurons. Call [`RingSpec::start`] on the built network to set it running.
pub fn build_ring(b: &mut NetworkBuilder, size: u64) -> Result<RingSpec, ParticleError> {
    add_ring(b, size, true)
}

impl RingSpec {
    /// Kicks neuron 0 on `tick`.
    pub fn start(&self, net: &mut Network, tick: u64) -> Result<(), NetworkError> {
        net.inject(self.neurons[0], 1.0, tick)
    }

    /// Indices of ring neurons whose deliveries for the next tick reach threshold.
    fn armed(&self, scheduled: &[f64]) -> Vec<usize> {
        self.neurons
            .iter()
            .enumerate()
            .filter(|(_, n)| scheduled[n.index()] >= 1.0)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkerDimension {
    pub rings: Vec<RingSpec>,
    pub negative_source: NeuronId,
    pub positive_source: NeuronId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkerCircuit {
    pub walker_id: usize,
    pub dims: Vec<WalkerDimension>,
}

impl WalkerCircuit {
    pub fn neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.dims.iter().flat_map(|d| {
            [d.negative_source, d.positive_source].into_iter().chain(
                d.rings.iter().flat_map(|r| {
                    r.neurons.iter().copied().chain(
                        r.update_pairs.iter().flat_map(|p| [p.positive, p.negative]),
                    )
                }),
            )
        })
    }
}

fn validate_moduli(moduli: &[u64]) -> Result<(), ParticleError> {
    residue::capacity(moduli)?;
    match moduli.iter().find(|&&c| c < 3 || !is_prime(c)) {
        Some(&c) => Err(ParticleError::InvalidRingSize(c)),
        None => Ok(()),
    }
}

/// One walker: per dimension, two movement sources and a ring with update
/// neurons for every modulus. Sources excite every positive (negative) update
/// neuron of their dimension with weight 0.5, delay 1.
pub fn build_walker(
    b: &mut NetworkBuilder,
    walker_id: usize,
    moduli_per_dim: &[Vec<u64>],
) -> Result<WalkerCircuit, ParticleError> {
    let mut dims = Vec::with_capacity(moduli_per_dim.len());
    for moduli in moduli_per_dim {
        validate_moduli(moduli)?;
        let negative_source = b.add_neuron(NeuronSpec::new(1.0));
        let positive_source = b.add_neuron(NeuronSpec::new(1.0));
        let rings = moduli
            .iter()
            .map(|&c| build_ring(b, c))
            .collect::<Result<Vec<_>, _>>()?;
        for ring in &rings {
            for pair in &ring.update_pairs {
                b.connect(positive_source, pair.positive, 0.5, 1);
                b.connect(negative_source, pair.negative, 0.5, 1);
            }
        }
        dims.push(WalkerDimension {
            rings,
            negative_source,
            positive_source,
        });
    }
    Ok(WalkerCircuit { walker_id, dims })
}

/// Free-running rings, one set per dimension, shared by all walkers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceRings {
    pub dims: Vec<Vec<RingSpec>>,
}

pub fn build_reference(b: &mut NetworkBuilder, moduli_per_dim: &[Vec<u64>]) -> Result<ReferenceRings, ParticleError> {
    let dims = moduli_per_dim
        .iter()
        .map(|moduli| {
            validate_moduli(moduli)?;
            moduli.iter().map(|&c| add_ring(b, c, false)).collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReferenceRings { dims })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionProbs {
    pub p_neg: f64,
    pub p_pos: f64,
}

impl DirectionProbs {
    pub fn new(p_neg: f64, p_pos: f64) -> Self {
        Self { p_neg, p_pos }
    }

    pub fn p_stay(&self) -> f64 {
        (1.0 - self.p_neg - self.p_pos).max(0.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_neg", self.p_neg), ("p_pos", self.p_pos)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if self.p_neg + self.p_pos > 1.0 + 1e-12 {
            return Err(format!(
                "p_neg + p_pos = {} exceeds 1",
                self.p_neg + self.p_pos
            ));
        }
        Ok(())
    }

    /// Categorical draw over (neg, pos, stay).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.random();
        if u < self.p_neg {
            Action::Neg
        } else if u < self.p_neg + self.p_pos {
            Action::Pos
        } else {
            Action::Stay
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovePolicy {
    pub dims: Vec<DirectionProbs>,
}

impl MovePolicy {
    pub fn uniform(dims: usize, p_neg: f64, p_pos: f64) -> Self {
        Self {
            dims: vec![DirectionProbs::new(p_neg, p_pos); dims],
        }
    }

    pub fn validate(&self) -> Result<(), ParticleError> {
        for (d, probs) in self.dims.iter().enumerate() {
            probs
                .validate()
                .map_err(|e| ParticleError::InvalidPolicy(format!("dimension {d}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Neg,
    Pos,
    Stay,
}

impl Action {
    pub fn delta(self) -> i64 {
        match self {
            Action::Neg => -1,
            Action::Pos => 1,
            Action::Stay => 0,
        }
    }
}

/// What a neuron is for; `walker: None` marks the reference rings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeuronRole {
    Ring { walker: Option<usize>, dim: usize, ring: usize },
    Update { walker: usize, dim: usize, ring: usize, positive: bool },
    Source { walker: usize, dim: usize, positive: bool },
}

/// Spikes attributed to one walker dimension.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTally {
    pub ring: usize,
    pub update: usize,
    pub source: usize,
}

impl SpikeTally {
    pub fn total(&self) -> usize {
        self.ring + self.update + self.source
    }
}

#[derive(Clone, Debug, Default)]
pub struct MacroStepRecord {
    /// `actions[walker][dim]`.
    pub actions: Vec<Vec<Action>>,
    pub events: Vec<SpikeEvent>,
}

/// Walkers and reference rings in one network, plus the controller that samples
/// movement actions. Each walker has its own action RNG, so a walker's
/// trajectory does not depend on which other walkers share its network.
#[derive(Clone, Debug)]
pub struct ParticleSystem {
    net: Network,
    moduli: Vec<Vec<u64>>,
    reference: ReferenceRings,
    walkers: Vec<WalkerCircuit>,
    policy: MovePolicy,
    rngs: Vec<ChaCha8Rng>,
    roles: Vec<Option<NeuronRole>>,
    steps: u64,
}

impl ParticleSystem {
    /// Builds reference rings and one walker circuit per id; walker `id` draws its
    /// actions from the stream `(master_seed, "particle-walker", id)`.
    pub fn new(
        moduli_per_dim: Vec<Vec<u64>>,
        policy: MovePolicy,
        walker_ids: Range<usize>,
        master_seed: u64,
    ) -> Result<Self, ParticleError> {
        policy.validate()?;
        if policy.dims.len() != moduli_per_dim.len() {
            return Err(ParticleError::InvalidPolicy(format!(
                "policy has {} dimensions, moduli have {}",
                policy.dims.len(),
                moduli_per_dim.len()
            )));
        }
        let mut b = NetworkBuilder::new();
        let reference = build_reference(&mut b, &moduli_per_dim)?;
        let walkers = walker_ids
            .clone()
            .map(|id| build_walker(&mut b, id, &moduli_per_dim))
            .collect::<Result<Vec<_>, _>>()?;

        let mut roles = vec![None; b.neuron_count()];
        for (dim, rings) in reference.dims.iter().enumerate() {
            for (ring, spec) in rings.iter().enumerate() {
                for n in &spec.neurons {
                    roles[n.index()] = Some(NeuronRole::Ring { walker: None, dim, ring });
                }
            }
        }
        for (w, walker) in walkers.iter().enumerate() {
            for (dim, d) in walker.dims.iter().enumerate() {
                roles[d.negative_source.index()] =
                    Some(NeuronRole::Source { walker: w, dim, positive: false });
                roles[d.positive_source.index()] =
                    Some(NeuronRole::Source { walker: w, dim, positive: true });
                for (ring, spec) in d.rings.iter().enumerate() {
                    for n in &spec.neurons {
                        roles[n.index()] = Some(NeuronRole::Ring { walker: Some(w), dim, ring });
                    }
                    for p in &spec.update_pairs {
                        roles[p.positive.index()] =
                            Some(NeuronRole::Update { walker: w, dim, ring, positive: true });
                        roles[p.negative.index()] =
                            Some(NeuronRole::Update { walker: w, dim, ring, positive: false });
                    }
                }
            }
        }

        // The circuit itself is deterministic; the network seed only matters for
        // completeness of the state.
        let mut net = b.build(seed::derive_seed(master_seed, "particle-network", walker_ids.start as u64))?;
        for rings in &reference.dims {
            for ring in rings {
                ring.start(&mut net, 0)?;
            }
        }
        for walker in &walkers {
            for d in &walker.dims {
                for ring in &d.rings {
                    ring.start(&mut net, 0)?;
                }
            }
        }
        let rngs = walker_ids
            .map(|id| seed::rng_for(master_seed, "particle-walker", id as u64))
            .collect();
        Ok(Self {
            net,
            moduli: moduli_per_dim,
            reference,
            walkers,
            policy,
            rngs,
            roles,
            steps: 0,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Direct access for tests that need to perturb the circuit.
    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn walkers(&self) -> &[WalkerCircuit] {
        &self.walkers
    }

    pub fn reference(&self) -> &ReferenceRings {
        &self.reference
    }

    pub fn moduli(&self) -> &[Vec<u64>] {
        &self.moduli
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn role(&self, neuron: NeuronId) -> Option<NeuronRole> {
        self.roles.get(neuron.index()).copied().flatten()
    }

    /// One random-walk step for every walker: choose an action per dimension
    /// (sampled, or taken from `forced[walker][dim]`), fire the matching source
    /// neurons and advance the network two ticks.
    pub fn macro_step(&mut self, forced: Option<&[Vec<Action>]>) -> Result<MacroStepRecord, ParticleError> {
        let now = self.net.tick();
        if now % 2 != 0 {
            return Err(ParticleError::MisPhased(now));
        }
        let dims = self.moduli.len();
        if let Some(f) = forced {
            if f.len() != self.walkers.len() {
                return Err(ParticleError::ForcedShape { expected: self.walkers.len(), got: f.len() });
            }
            if let Some(bad) = f.iter().find(|a| a.len() != dims) {
                return Err(ParticleError::ForcedShape { expected: dims, got: bad.len() });
            }
        }
        let mut actions = Vec::with_capacity(self.walkers.len());
        for (w, walker) in self.walkers.iter().enumerate() {
            let mut chosen = Vec::with_capacity(dims);
            for (d, dim) in walker.dims.iter().enumerate() {
                let action = match forced {
                    Some(f) => f[w][d],
                    None => self.policy.dims[d].sample(&mut self.rngs[w]),
                };
                match action {
                    Action::Pos => self.net.inject(dim.positive_source, 1.0, now)?,
                    Action::Neg => self.net.inject(dim.negative_source, 1.0, now)?,
                    Action::Stay => {}
                }
                chosen.push(action);
            }
            actions.push(chosen);
        }
        let mut events = Vec::new();
        self.net.step_into(&mut events);
        self.net.step_into(&mut events);
        self.steps += 1;
        Ok(MacroStepRecord { actions, events })
    }

    fn scheduled_inputs(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.net.neuron_count()];
        for (n, w) in self.net.scheduled_deliveries() {
            totals[n.index()] += w;
        }
        totals
    }

    fn ring_phase(ring: &RingSpec, scheduled: &[f64], owner: impl Fn() -> String, dim: usize, idx: usize) -> Result<u64, ParticleError> {
        let armed = ring.armed(scheduled);
        if armed.len() != 1 {
            return Err(ParticleError::RingCorrupted {
                owner: owner(),
                dim,
                ring: idx,
                active: armed.len(),
            });
        }
        Ok(armed[0] as u64)
    }

    /// Active neuron index of every reference ring, per dimension.
    pub fn reference_phases(&self) -> Result<Vec<Vec<u64>>, ParticleError> {
        let scheduled = self.scheduled_inputs();
        self.reference_phases_from(&scheduled)
    }

    fn reference_phases_from(&self, scheduled: &[f64]) -> Result<Vec<Vec<u64>>, ParticleError> {
        self.reference
            .dims
            .iter()
            .enumerate()
            .map(|(d, rings)| {
                rings
                    .iter()
                    .enumerate()
                    .map(|(i, r)| Self::ring_phase(r, scheduled, || "reference".into(), d, i))
                    .collect()
            })
            .collect()
    }

    /// Active neuron index of every ring of walker `w` (index into this system).
    pub fn walker_phases(&self, w: usize) -> Result<Vec<Vec<u64>>, ParticleError> {
        let scheduled = self.scheduled_inputs();
        self.walker_phases_from(w, &scheduled)
    }

    fn walker_phases_from(&self, w: usize, scheduled: &[f64]) -> Result<Vec<Vec<u64>>, ParticleError> {
        let walker = &self.walkers[w];
        walker
            .dims
            .iter()
            .enumerate()
            .map(|(d, dim)| {
                dim.rings
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        Self::ring_phase(r, scheduled, || format!("walker {}", walker.walker_id), d, i)
                    })
                    .collect()
            })
            .collect()
    }

    fn decode_position(&self, walker: &[Vec<u64>], reference: &[Vec<u64>]) -> Result<Vec<i64>, ParticleError> {
        self.moduli
            .iter()
            .zip(walker.iter().zip(reference))
            .map(|(moduli, (c, r))| Ok(residue::decode(&residue::offset(c, r, moduli)?)?))
            .collect()
    }

    /// Decoded position of walker `w` at the current macro-step boundary.
    pub fn read_position(&self, w: usize) -> Result<Vec<i64>, ParticleError> {
        let scheduled = self.scheduled_inputs();
        let reference = self.reference_phases_from(&scheduled)?;
        let walker = self.walker_phases_from(w, &scheduled)?;
        self.decode_position(&walker, &reference)
    }

    /// Decoded positions of all walkers, `positions[walker][dim]`.
    pub fn read_positions(&self) -> Result<Vec<Vec<i64>>, ParticleError> {
        let scheduled = self.scheduled_inputs();
        let reference = self.reference_phases_from(&scheduled)?;
        (0..self.walkers.len())
            .map(|w| {
                let walker = self.walker_phases_from(w, &scheduled)?;
                self.decode_position(&walker, &reference)
            })
            .collect()
    }

    /// Per-walker, per-dimension spike counts in `events`, plus the reference's
    /// ring spikes per dimension.
    pub fn tally(&self, events: &[SpikeEvent]) -> (Vec<Vec<SpikeTally>>, Vec<usize>) {
        let dims = self.moduli.len();
        let mut walkers = vec![vec![SpikeTally::default(); dims]; self.walkers.len()];
        let mut reference = vec![0; dims];
        for e in events.iter().filter(|e| e.fired()) {
            match self.role(e.neuron) {
                Some(NeuronRole::Ring { walker: None, dim, .. }) => reference[dim] += 1,
                Some(NeuronRole::Ring { walker: Some(w), dim, .. }) => walkers[w][dim].ring += 1,
                Some(NeuronRole::Update { walker, dim, .. }) => walkers[walker][dim].update += 1,
                Some(NeuronRole::Source { walker, dim, .. }) => walkers[walker][dim].source += 1,
                None => {}
            }
        }
        (walkers, reference)
    }
}

/// Runs `walkers` independent walkers for `steps` macro-steps, split into
/// batches that each get their own network (and reference copy) and run in
/// parallel. Results are identical for any `batch_size`.
///
/// With `full_paths` false only the initial and final positions are kept.
pub fn simulate_ensemble(
    moduli_per_dim: &[Vec<u64>],
    policy: &MovePolicy,
    walkers: usize,
    steps: u64,
    master_seed: u64,
    batch_size: usize,
    full_paths: bool,
) -> Result<Vec<WalkTrace>, ParticleError> {
    let batch_size = batch_size.max(1);
    let batches: Vec<Range<usize>> = (0..walkers)
        .step_by(batch_size)
        .map(|lo| lo..(lo + batch_size).min(walkers))
        .collect();
    let results = batches
        .into_par_iter()
        .map(|ids| -> Result<Vec<WalkTrace>, ParticleError> {
            let mut sys = ParticleSystem::new(moduli_per_dim.to_vec(), policy.clone(), ids.clone(), master_seed)?;
            let mut traces: Vec<WalkTrace> = ids
                .clone()
                .map(|id| WalkTrace { walker_id: id, positions: Vec::new() })
                .collect();
            let record = |sys: &ParticleSystem, traces: &mut Vec<WalkTrace>| -> Result<(), ParticleError> {
                for (t, p) in traces.iter_mut().zip(sys.read_positions()?) {
                    t.positions.push(p);
                }
                Ok(())
            };
            record(&sys, &mut traces)?;
            for s in 1..=steps {
                sys.macro_step(None)?;
                if full_paths || s == steps {
                    record(&sys, &mut traces)?;
                }
            }
            Ok(traces)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(results.into_iter().flatten().collect())
}
