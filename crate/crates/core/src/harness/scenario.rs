//! JSON scenario files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{build_grid_topology, TransitionGraph};
use crate::particle::{is_prime, DirectionProbs, MovePolicy};
use crate::residue;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Particle,
    Density,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particle: Option<ParticleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// `moduli`, `p_neg` and `p_pos` hold one entry per dimension, or a single entry
/// shared by all dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    pub dims: usize,
    pub moduli: Vec<Vec<u64>>,
    pub walkers: usize,
    pub p_neg: Vec<f64>,
    pub p_pos: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    /// `dir_probs` is `[left, right]`; the remainder is the probability of staying.
    Cycle { n: usize },
    /// `dir_probs` is `[up, down, left, right]`.
    Grid {
        width: usize,
        height: usize,
        #[serde(default = "yes")]
        torus: bool,
    },
    /// `rows[i]` lists `[destination, probability]` pairs.
    Edges { rows: Vec<Vec<(usize, f64)>> },
}

/// Rectangle of grid cells with its top-left corner at `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    #[serde(default = "one")]
    pub width: usize,
    #[serde(default = "one")]
    pub height: usize,
}

/// A node given either by index or, on grids, by `(x, y)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<usize>,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    pub topology: Topology,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dir_probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<Rect>,
    pub initial: Vec<Placement>,
    #[serde(default = "yes")]
    pub synchronized: bool,
    /// Nodes whose counts are also written to `probes.csv`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<NodeRef>,
    /// Steps at which `verify` compares node distributions with the oracle.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<u64>,
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = ScenarioConfig::from_json(&text)?;
    if config.name.is_empty() {
        config.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(config)
}

fn broadcast<T: Clone>(v: &[T], dims: usize, field: &str) -> Result<Vec<T>, ScenarioError> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); dims]),
        n if n == dims => Ok(v.to_vec()),
        n => Err(invalid(field, format!("has {n} entries for {dims} dimensions"))),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match (self.method, &self.particle, &self.density) {
            (Method::Particle, Some(_), None) => {
                self.policy()?;
                self.moduli()?;
            }
            (Method::Density, None, Some(_)) => {
                let graph = self.graph()?;
                self.initial_counts(&graph)?;
                self.probe_nodes(&graph)?;
            }
            (Method::Particle, None, _) => return Err(invalid("particle", "section missing for method particle")),
            (Method::Density, _, None) => return Err(invalid("density", "section missing for method density")),
            (Method::Particle, _, Some(_)) => return Err(invalid("density", "not allowed for method particle")),
            (Method::Density, Some(_), _) => return Err(invalid("particle", "not allowed for method density")),
        }
        Ok(())
    }

    fn particle_section(&self) -> Result<&ParticleSection, ScenarioError> {
        self.particle.as_ref().ok_or_else(|| invalid("particle", "section missing"))
    }

    fn density_section(&self) -> Result<&DensitySection, ScenarioError> {
        self.density.as_ref().ok_or_else(|| invalid("density", "section missing"))
    }

    pub fn policy(&self) -> Result<MovePolicy, ScenarioError> {
        let p = self.particle_section()?;
        if p.dims == 0 {
            return Err(invalid("particle.dims", "must be at least 1"));
        }
        let neg = broadcast(&p.p_neg, p.dims, "particle.p_neg")?;
        let pos = broadcast(&p.p_pos, p.dims, "particle.p_pos")?;
        let dims: Vec<DirectionProbs> = neg.iter().zip(&pos).map(|(&n, &p)| DirectionProbs::new(n, p)).collect();
        for (d, probs) in dims.iter().enumerate() {
            probs
                .validate()
                .map_err(|e| invalid("particle.p_neg/p_pos", format!("dimension {d}: {e}")))?;
        }
        Ok(MovePolicy { dims })
    }

    pub fn moduli(&self) -> Result<Vec<Vec<u64>>, ScenarioError> {
        let p = self.particle_section()?;
        let moduli = broadcast(&p.moduli, p.dims, "particle.moduli")?;
        for m in &moduli {
            if m.is_empty() {
                return Err(invalid("particle.moduli", "each dimension needs at least one ring"));
            }
            residue::capacity(m).map_err(|e| invalid("particle.moduli", e.to_string()))?;
            if let Some(c) = m.iter().find(|&&c| c < 3 || !is_prime(c)) {
                return Err(invalid("particle.moduli", format!("ring size {c} must be a prime of at least 3")));
            }
        }
        Ok(moduli)
    }

    pub fn walkers(&self) -> usize {
        self.particle.as_ref().map_or(0, |p| p.walkers)
    }

    pub fn obstacle_cells(&self) -> Result<BTreeSet<usize>, ScenarioError> {
        let d = self.density_section()?;
        let Topology::Grid { width, height, .. } = d.topology else {
            if d.obstacles.is_empty() {
                return Ok(BTreeSet::new());
            }
            return Err(invalid("density.obstacles", "only grid topologies have obstacles"));
        };
        let mut cells = BTreeSet::new();
        for r in &d.obstacles {
            if r.x + r.width > width || r.y + r.height > height || r.width == 0 || r.height == 0 {
                return Err(invalid("density.obstacles", format!("{r:?} does not fit a {width}x{height} grid")));
            }
            for y in r.y..r.y + r.height {
                for x in r.x..r.x + r.width {
                    cells.insert(y * width + x);
                }
            }
        }
        Ok(cells)
    }

    pub fn graph(&self) -> Result<TransitionGraph, ScenarioError> {
        let d = self.density_section()?;
        let graph_err = |e: crate::density::DensityError| invalid("density", e.to_string());
        match &d.topology {
            Topology::Cycle { n } => {
                let [left, right] = d.dir_probs[..] else {
                    return Err(invalid("density.dir_probs", "a cycle needs [left, right]"));
                };
                TransitionGraph::cycle(*n, left, right).map_err(graph_err)
            }
            Topology::Grid { width, height, torus } => {
                let [up, down, left, right] = d.dir_probs[..] else {
                    return Err(invalid("density.dir_probs", "a grid needs [up, down, left, right]"));
                };
                build_grid_topology(*width, *height, [up, down, left, right], *torus, &self.obstacle_cells()?)
                    .map_err(graph_err)
            }
            Topology::Edges { rows } => {
                if !d.dir_probs.is_empty() {
                    return Err(invalid("density.dir_probs", "not used with explicit edges"));
                }
                if !d.obstacles.is_empty() {
                    return Err(invalid("density.obstacles", "only grid topologies have obstacles"));
                }
                TransitionGraph::from_rows(rows.clone()).map_err(graph_err)
            }
        }
    }

    fn resolve(&self, graph: &TransitionGraph, node: Option<usize>, x: Option<usize>, y: Option<usize>, field: &str) -> Result<usize, ScenarioError> {
        let n = graph.node_count();
        let index = match (node, x, y, graph.grid()) {
            (Some(i), None, None, _) => i,
            (None, Some(x), Some(y), Some(g)) if x < g.width && y < g.height => g.node(x, y),
            (None, Some(_), Some(_), Some(_)) => return Err(invalid(field, "cell outside the grid")),
            (None, Some(_), Some(_), None) => return Err(invalid(field, "x/y need a grid topology")),
            _ => return Err(invalid(field, "give either `node` or both `x` and `y`")),
        };
        if index >= n {
            return Err(invalid(field, format!("node {index} out of range for {n} nodes")));
        }
        Ok(index)
    }

    pub fn initial_counts(&self, graph: &TransitionGraph) -> Result<Vec<u64>, ScenarioError> {
        let d = self.density_section()?;
        let mut counts = vec![0u64; graph.node_count()];
        for p in &d.initial {
            let node = self.resolve(graph, p.node, p.x, p.y, "density.initial")?;
            if graph.is_obstacle(node) {
                return Err(invalid("density.initial", format!("node {node} is an obstacle")));
            }
            counts[node] += p.count;
        }
        Ok(counts)
    }

    pub fn probe_nodes(&self, graph: &TransitionGraph) -> Result<Vec<usize>, ScenarioError> {
        let d = self.density_section()?;
        d.probes
            .iter()
            .map(|p| self.resolve(graph, p.node, p.x, p.y, "density.probes"))
            .collect()
    }

    /// Verification checkpoints: the configured ones, or steps 10, 50, 100 and
    /// the final step, whichever exist.
    pub fn checkpoints(&self) -> Vec<u64> {
        let configured = self.density.as_ref().map(|d| d.checkpoints.clone()).unwrap_or_default();
        let mut steps: Vec<u64> = if configured.is_empty() {
            vec![10, 50, 100, self.steps]
        } else {
            configured
        };
        steps.retain(|&s| s >= 1 && s <= self.steps);
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG4: &str = r#"{
        "method": "particle", "seed": 4, "steps": 100,
        "particle": {"dims": 2, "moduli": [[5, 7, 11]], "walkers": 20, "p_neg": [0.25], "p_pos": [0.25]}
    }"#;

    #[test]
    fn particle_config_parses() {
        let c = ScenarioConfig::from_json(FIG4).unwrap();
        assert_eq!(c.walkers(), 20);
        assert_eq!(c.moduli().unwrap(), vec![vec![5, 7, 11]; 2]);
        assert_eq!(c.policy().unwrap(), MovePolicy::uniform(2, 0.25, 0.25));
    }

    #[test]
    fn over_unit_probability_is_rejected() {
        let bad = FIG4.replace("\"p_neg\": [0.25]", "\"p_neg\": [0.95]");
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(ScenarioError::Invalid { .. })));
    }

    #[test]
    fn missing_section_is_rejected() {
        let err = ScenarioConfig::from_json(r#"{"method": "particle", "steps": 3}"#).unwrap_err();
        assert!(err.to_string().contains("particle"), "{err}");
    }

    #[test]
    fn unknown_field_is_named() {
        let bad = FIG4.replace("\"walkers\"", "\"walker_count\"");
        let err = ScenarioConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("walker_count"), "{err}");
    }

    #[test]
    fn density_defaults() {
        let c = ScenarioConfig::from_json(
            r#"{"method": "density", "steps": 5, "density": {
                "topology": {"grid": {"width": 4, "height": 3}},
                "dir_probs": [0.25, 0.25, 0.25, 0.25],
                "initial": [{"x": 1, "y": 2, "count": 7}]
            }}"#,
        )
        .unwrap();
        let d = c.density.as_ref().unwrap();
        assert!(d.synchronized);
        assert_eq!(d.topology, Topology::Grid { width: 4, height: 3, torus: true });
        let g = c.graph().unwrap();
        let counts = c.initial_counts(&g).unwrap();
        assert_eq!(counts[9], 7);
        assert_eq!(c.checkpoints(), vec![5]);
    }

    #[test]
    fn obstacle_rectangles_expand_to_cells() {
        let c = ScenarioConfig::from_json(
            r#"{"method": "density", "steps": 1, "density": {
                "topology": {"grid": {"width": 5, "height": 5}},
                "dir_probs": [0.25, 0.25, 0.25, 0.25],
                "obstacles": [{"x": 1, "y": 1, "width": 2, "height": 2}],
                "initial": [{"node": 0, "count": 1}]
            }}"#,
        )
        .unwrap();
        assert_eq!(c.obstacle_cells().unwrap(), BTreeSet::from([6, 7, 11, 12]));
    }

    #[test]
    fn walkers_cannot_start_in_obstacles() {
        let err = ScenarioConfig::from_json(
            r#"{"method": "density", "steps": 1, "density": {
                "topology": {"grid": {"width": 5, "height": 5}},
                "dir_probs": [0.25, 0.25, 0.25, 0.25],
                "obstacles": [{"x": 1, "y": 1}],
                "initial": [{"x": 1, "y": 1, "count": 1}]
            }}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("obstacle"));
    }

    #[test]
    fn both_sections_is_an_error() {
        let both = FIG4.replace(
            "\"particle\":",
            r#""density": {"topology": {"cycle": {"n": 3}}, "dir_probs": [0.5, 0.5], "initial": []}, "particle":"#,
        );
        assert!(ScenarioConfig::from_json(&both).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = ScenarioConfig::from_json(FIG4).unwrap();
        assert_eq!(ScenarioConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
