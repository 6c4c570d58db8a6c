//! Per-node counting unit and its stochastic routing tree.
//!
//! Counter and generator: the counter holds `-m`; a trigger makes the generator
//! fire every tick, each spike adding +1 to the counter, until the counter
//! reaches 0, fires and inhibits the generator. The generator fires `m + 1`
//! times; the last spike is cancelled downstream by the counter's inhibition,
//! which follows every generator edge with the same delay. The counter fires
//! twice per phase: on reaching 0 and on absorbing the cancelled spike.
//!
//! Routing tree: internal node fires with probability `mass(right)/mass(node)`.
//! Its drivers excite it (delay 1) and excite the left child (delay 2), the
//! node itself excites the right child and inhibits the left one (delay 1), so
//! exactly one child is entered per activation. Non-root internal nodes are
//! entered through a relay; leaves are output gates. Leaf edges are padded so
//! every leaf fires the same number of ticks after its generator spike.

use serde::{Deserialize, Serialize};

use super::DensityError;
use crate::network::{NetworkBuilder, NeuronId, NeuronSpec};

const PROB_TOLERANCE: f64 = 1e-9;

/// Routing plan over an ordered output list; leaves index into that list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GateTree {
    Leaf { output: usize },
    Split { p_right: f64, left: Box<GateTree>, right: Box<GateTree> },
}

impl GateTree {
    pub fn depth(&self) -> usize {
        match self {
            GateTree::Leaf { .. } => 0,
            GateTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn split_count(&self) -> usize {
        match self {
            GateTree::Leaf { .. } => 0,
            GateTree::Split { left, right, .. } => 1 + left.split_count() + right.split_count(),
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        match self {
            GateTree::Leaf { output } => vec![*output],
            GateTree::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    /// Probability of reaching each leaf, keyed by output index.
    pub fn leaf_probabilities(&self) -> Vec<(usize, f64)> {
        match self {
            GateTree::Leaf { output } => vec![(*output, 1.0)],
            GateTree::Split { p_right, left, right } => {
                let mut v: Vec<(usize, f64)> = left
                    .leaf_probabilities()
                    .into_iter()
                    .map(|(o, p)| (o, p * (1.0 - p_right)))
                    .collect();
                v.extend(right.leaf_probabilities().into_iter().map(|(o, p)| (o, p * p_right)));
                v
            }
        }
    }
}

fn balanced(leaves: &[(usize, f64)]) -> GateTree {
    if let [(output, _)] = leaves {
        return GateTree::Leaf { output: *output };
    }
    let split = leaves.len().div_ceil(2);
    let (l, r) = leaves.split_at(split);
    let total: f64 = leaves.iter().map(|(_, p)| p).sum();
    let right: f64 = r.iter().map(|(_, p)| p).sum();
    GateTree::Split {
        p_right: (right / total).clamp(0.0, 1.0),
        left: Box::new(balanced(l)),
        right: Box::new(balanced(r)),
    }
}

/// Balanced binary routing tree over `probs` after dropping zero entries; the
/// left half gets the extra leaf when the count is odd.
pub fn sample_gate_tree(probs: &[f64]) -> Result<GateTree, DensityError> {
    if probs.is_empty() {
        return Err(DensityError::InvalidGraph("gate tree needs at least one output".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0 + PROB_TOLERANCE).contains(*p)) {
        return Err(DensityError::InvalidGraph(format!("gate probability {p} outside [0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(DensityError::InvalidGraph(format!("gate probabilities sum to {sum}")));
    }
    let leaves: Vec<(usize, f64)> = probs.iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect();
    Ok(balanced(&leaves))
}

/// Stochastic tree neuron, with its entry relay when it is not the root.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateNeuron {
    pub gate: NeuronId,
    pub relay: Option<NeuronId>,
    pub p_right: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputGate {
    pub neuron: NeuronId,
    pub destination: usize,
}

/// Staging counter that holds arrivals until the flush phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buffer {
    pub counter: NeuronId,
    pub control: NeuronId,
    pub transfer: NeuronId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCircuit {
    pub node: usize,
    pub counter: NeuronId,
    pub generator: NeuronId,
    pub gates: Vec<GateNeuron>,
    pub outputs: Vec<OutputGate>,
    pub buffer: Option<Buffer>,
    pub tree: GateTree,
}

impl UnitCircuit {
    /// Where walkers arriving at this unit are delivered.
    pub fn intake(&self) -> NeuronId {
        self.buffer.map_or(self.counter, |b| b.counter)
    }

    pub fn neuron_count(&self) -> usize {
        2 + self.gates.len()
            + self.gates.iter().filter(|g| g.relay.is_some()).count()
            + self.outputs.len()
            + if self.buffer.is_some() { 3 } else { 0 }
    }
}

pub(crate) fn counter_neuron() -> NeuronSpec {
    NeuronSpec::new(0.0).with_decay(0.0).gated()
}

fn relay_neuron() -> NeuronSpec {
    NeuronSpec::new(0.5)
}

/// Adds the neurons and internal edges of one unit. Output-gate edges to other
/// units are added later by [`connect_outputs`].
pub(crate) fn add_unit(
    b: &mut NetworkBuilder,
    node: usize,
    row: &[(usize, f64)],
    synchronized: bool,
) -> Result<UnitCircuit, DensityError> {
    let probs: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
    let tree = sample_gate_tree(&probs)?;
    let counter = b.add_neuron(counter_neuron());
    let generator = b.add_neuron(relay_neuron());
    b.connect(generator, counter, 1.0, 1);
    b.connect(generator, generator, 1.0, 1);
    b.connect(counter, generator, -1.0, 1);

    let mut unit = UnitCircuit {
        node,
        counter,
        generator,
        gates: Vec::new(),
        outputs: Vec::new(),
        buffer: None,
        tree: tree.clone(),
    };
    let depth = tree.depth();
    let drivers = [(generator, 1.0), (counter, -1.0)];
    match &tree {
        GateTree::Leaf { output } => {
            let out = add_output(b, &mut unit, row[*output].0);
            for (pre, w) in drivers {
                b.connect(pre, out, w, 2);
            }
        }
        GateTree::Split { .. } => wire_split(b, &mut unit, row, &tree, &drivers, 0, depth),
    }

    if synchronized {
        let buffer = Buffer {
            counter: b.add_neuron(counter_neuron()),
            control: b.add_neuron(relay_neuron()),
            transfer: b.add_neuron(relay_neuron()),
        };
        // Same count-out loop as counter/generator; each non-final control
        // spike passes through the transfer neuron as one walker into the counter.
        b.connect(buffer.control, buffer.control, 1.0, 1);
        b.connect(buffer.control, buffer.counter, 1.0, 1);
        b.connect(buffer.counter, buffer.control, -1.0, 1);
        b.connect(buffer.control, buffer.transfer, 1.0, 1);
        b.connect(buffer.counter, buffer.transfer, -1.0, 1);
        b.connect(buffer.transfer, counter, -1.0, 1);
        unit.buffer = Some(buffer);
    }
    Ok(unit)
}

fn add_output(b: &mut NetworkBuilder, unit: &mut UnitCircuit, destination: usize) -> NeuronId {
    let neuron = b.add_neuron(relay_neuron());
    unit.outputs.push(OutputGate { neuron, destination });
    neuron
}

/// Entry neuron of a child: an output gate for a leaf, a relay otherwise.
/// Returns the entry and the extra delay on edges into it.
fn child_entry(
    b: &mut NetworkBuilder,
    unit: &mut UnitCircuit,
    row: &[(usize, f64)],
    child: &GateTree,
    child_depth: usize,
    max_depth: usize,
) -> (NeuronId, u32) {
    match child {
        GateTree::Leaf { output } => (
            add_output(b, unit, row[*output].0),
            2 * (max_depth - child_depth) as u32,
        ),
        GateTree::Split { .. } => (b.add_neuron(relay_neuron()), 0),
    }
}

fn wire_split(
    b: &mut NetworkBuilder,
    unit: &mut UnitCircuit,
    row: &[(usize, f64)],
    tree: &GateTree,
    drivers: &[(NeuronId, f64)],
    depth: usize,
    max_depth: usize,
) {
    let GateTree::Split { p_right, left, right } = tree else {
        unreachable!("wire_split called on a leaf");
    };
    let gate = b.add_neuron(relay_neuron().with_fire_probability(*p_right));
    let relay = if depth == 0 { None } else { Some(drivers[0].0) };
    unit.gates.push(GateNeuron { gate, relay, p_right: *p_right });
    for &(pre, w) in drivers {
        b.connect(pre, gate, w, 1);
    }
    let (left_entry, left_pad) = child_entry(b, unit, row, left, depth + 1, max_depth);
    for &(pre, w) in drivers {
        b.connect(pre, left_entry, w, 2 + left_pad);
    }
    b.connect(gate, left_entry, -1.0, 1 + left_pad);
    let (right_entry, right_pad) = child_entry(b, unit, row, right, depth + 1, max_depth);
    b.connect(gate, right_entry, 1.0, 1 + right_pad);

    for (child, entry) in [(left, left_entry), (right, right_entry)] {
        if matches!(**child, GateTree::Split { .. }) {
            wire_split(b, unit, row, child, &[(entry, 1.0)], depth + 1, max_depth);
        }
    }
}

/// Output gate -> destination intake, weight -1, delay 1.
pub(crate) fn connect_outputs(b: &mut NetworkBuilder, units: &[UnitCircuit]) {
    for unit in units {
        for out in &unit.outputs {
            b.connect(out.neuron, units[out.destination].intake(), -1.0, 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_way_even_split() {
        let tree = sample_gate_tree(&[0.5, 0.5]).unwrap();
        assert_eq!(tree.split_count(), 1);
        let GateTree::Split { p_right, left, right } = tree else { panic!() };
        assert_eq!(p_right, 0.5);
        assert_eq!(*left, GateTree::Leaf { output: 0 });
        assert_eq!(*right, GateTree::Leaf { output: 1 });
    }

    #[test]
    fn zero_leaf_is_pruned() {
        assert_eq!(sample_gate_tree(&[1.0, 0.0]).unwrap(), GateTree::Leaf { output: 0 });
        assert_eq!(sample_gate_tree(&[0.0, 0.0, 1.0]).unwrap(), GateTree::Leaf { output: 2 });
    }

    #[test]
    fn four_way_tree_shape() {
        let tree = sample_gate_tree(&[0.35, 0.35, 0.15, 0.15]).unwrap();
        assert_eq!(tree.depth(), 2);
        assert_eq!(tree.split_count(), 3);
        assert_eq!(tree.leaves(), vec![0, 1, 2, 3]);
        let GateTree::Split { p_right, .. } = &tree else { panic!() };
        assert!((p_right - 0.3).abs() < 1e-12);
        for ((o, p), want) in tree.leaf_probabilities().into_iter().zip([0.35, 0.35, 0.15, 0.15]) {
            assert!((p - want).abs() < 1e-12, "output {o}");
        }
    }

    #[test]
    fn odd_count_leans_left() {
        let tree = sample_gate_tree(&[0.2, 0.2, 0.2, 0.2, 0.2]).unwrap();
        let GateTree::Split { left, right, p_right } = &tree else { panic!() };
        assert_eq!(left.leaves(), vec![0, 1, 2]);
        assert_eq!(right.leaves(), vec![3, 4]);
        assert!((p_right - 0.4).abs() < 1e-12);
        assert_eq!(tree.depth(), 3);
    }

    #[test]
    fn invalid_probabilities() {
        assert!(sample_gate_tree(&[]).is_err());
        assert!(sample_gate_tree(&[0.5, 0.6]).is_err());
        assert!(sample_gate_tree(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn unit_neuron_counts() {
        let mut b = NetworkBuilder::new();
        let two = add_unit(&mut b, 0, &[(1, 0.5), (2, 0.5)], false).unwrap();
        assert_eq!(two.gates.len(), 1);
        assert_eq!(two.outputs.len(), 2);
        assert_eq!(b.neuron_count(), two.neuron_count());

        let mut b = NetworkBuilder::new();
        let four = add_unit(&mut b, 0, &[(1, 0.35), (2, 0.35), (3, 0.15), (4, 0.15)], true).unwrap();
        assert_eq!(four.gates.len(), 3);
        assert_eq!(four.gates.iter().filter(|g| g.relay.is_some()).count(), 2);
        assert_eq!(b.neuron_count(), four.neuron_count());
        assert_eq!(b.neuron_count(), 2 + 3 + 2 + 4 + 3);
    }
}
