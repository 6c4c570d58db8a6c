//! Scenario-driven runs: parse a scenario file, build and run the chosen
//! circuit, export plot-ready files and compare against the oracle.

mod output;
mod run;
mod scenario;
mod verify;

pub use output::{emit_outputs, summary_json, write_report, OutputError};
pub use run::{
    run_replicas, run_scenario, DensityOutput, MethodOutput, OutputBundle, ParticleOutput, RunError, StepRecord,
    WrapEvent,
};
pub use scenario::{
    parse_scenario, DensitySection, Method, NodeRef, ParticleSection, Placement, Rect, ScenarioConfig,
    ScenarioError, Topology,
};
pub use verify::{
    compare_with_oracle, compare_with_oracle_using, Check, Status, VerifyOptions, VerifyReport, ALPHA,
    DENSITY_SAMPLES, MEAN_BAND, MIN_BAND_WALKERS, VARIANCE_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::density::{DensityError, DensitySystem};
use crate::particle::{resource_counts, spike_budget};
use crate::residue;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionResources {
    pub moduli: Vec<u64>,
    pub capacity: u64,
    /// Per walker: two sources plus rings and update pairs.
    pub neurons: usize,
    pub synapses: usize,
    pub reference_neurons: usize,
    pub idle_spikes: usize,
    pub move_spikes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceReport {
    Particle {
        walkers: usize,
        dims: Vec<DimensionResources>,
        total_neurons: usize,
        total_synapses: usize,
    },
    Density {
        nodes: usize,
        synchronized: bool,
        unit_neurons_min: usize,
        unit_neurons_max: usize,
        total_neurons: usize,
        total_synapses: usize,
    },
}

/// Neuron, synapse and spike budgets of the scenario's circuit.
pub fn resources(config: &ScenarioConfig) -> Result<ResourceReport, RunError> {
    config.validate()?;
    match config.method {
        Method::Particle => {
            let walkers = config.walkers();
            let dims: Vec<DimensionResources> = config
                .moduli()?
                .into_iter()
                .map(|m| {
                    let (neurons, synapses) = resource_counts(&m);
                    let (idle_spikes, move_spikes) = spike_budget(&m);
                    DimensionResources {
                        capacity: residue::capacity(&m).expect("validated"),
                        reference_neurons: m.iter().sum::<u64>() as usize,
                        moduli: m,
                        neurons,
                        synapses,
                        idle_spikes,
                        move_spikes,
                    }
                })
                .collect();
            let total_neurons = dims.iter().map(|d| d.reference_neurons + walkers * d.neurons).sum();
            let total_synapses = dims.iter().map(|d| 3 * d.reference_neurons + walkers * d.synapses).sum();
            Ok(ResourceReport::Particle { walkers, dims, total_neurons, total_synapses })
        }
        Method::Density => {
            let graph = config.graph()?;
            let counts = vec![0; graph.node_count()];
            let synchronized = config.density.as_ref().is_none_or(|d| d.synchronized);
            let sys = DensitySystem::new(graph, &counts, synchronized, config.seed)
                .map_err(|source: DensityError| RunError::Density { step: 0, source })?;
            let sizes: Vec<usize> = sys.units().iter().map(|u| u.neuron_count()).collect();
            Ok(ResourceReport::Density {
                nodes: sizes.len(),
                synchronized,
                unit_neurons_min: sizes.iter().copied().min().unwrap_or(0),
                unit_neurons_max: sizes.iter().copied().max().unwrap_or(0),
                total_neurons: sys.network().neuron_count(),
                total_synapses: sys.network().synapse_count(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn particle_resources_match_built_network() {
        let c = ScenarioConfig::from_json(
            r#"{"method": "particle", "steps": 1,
                "particle": {"dims": 2, "moduli": [[5, 7, 11]], "walkers": 3, "p_neg": [0.25], "p_pos": [0.25]}}"#,
        )
        .unwrap();
        let ResourceReport::Particle { dims, total_neurons, total_synapses, .. } = resources(&c).unwrap() else {
            panic!()
        };
        assert_eq!((dims[0].neurons, dims[0].synapses), (53, 235));
        assert_eq!((dims[0].idle_spikes, dims[0].move_spikes), (3, 7));
        let b = run_scenario(&c).unwrap();
        assert_eq!((b.neurons, b.synapses), (total_neurons, total_synapses));
    }

    #[test]
    fn density_resources() {
        let c = ScenarioConfig::from_json(
            r#"{"method": "density", "steps": 1, "density": {
                "topology": {"cycle": {"n": 24}}, "dir_probs": [0.5, 0.5], "initial": []}}"#,
        )
        .unwrap();
        let ResourceReport::Density { nodes, unit_neurons_min, unit_neurons_max, total_neurons, .. } =
            resources(&c).unwrap()
        else {
            panic!()
        };
        assert_eq!(nodes, 24);
        // counter, generator, one gate, two outputs, three buffer neurons
        assert_eq!((unit_neurons_min, unit_neurons_max), (8, 8));
        assert_eq!(total_neurons, 24 * 8 + 1);
    }
}
