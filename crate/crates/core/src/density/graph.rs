//! Row-stochastic transition graphs: cycles, 4-neighbour grids with walls and
//! obstacles, and explicit edge lists.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::DensityError;

const ROW_TOLERANCE: f64 = 1e-12;
const INPUT_TOLERANCE: f64 = 1e-9;

/// Grid directions in `(up, down, left, right)` order. Up is `y - 1`.
pub const DIRECTIONS: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

const PERPENDICULAR: [[usize; 2]; 4] = [[2, 3], [2, 3], [0, 1], [0, 1]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEmbedding {
    pub width: usize,
    pub height: usize,
    pub torus: bool,
    pub obstacles: BTreeSet<usize>,
}

impl GridEmbedding {
    /// Node index of `(x, y)` is `y * width + x`.
    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node % self.width, node / self.width)
    }

    pub fn node(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Neighbour of `node` in direction `d`, or `None` past a non-wrapping edge.
    pub fn neighbor(&self, node: usize, d: usize) -> Option<usize> {
        let (x, y) = self.coords(node);
        let (dx, dy) = DIRECTIONS[d];
        let (w, h) = (self.width as i64, self.height as i64);
        let (mut nx, mut ny) = (x as i64 + dx, y as i64 + dy);
        if self.torus {
            nx = nx.rem_euclid(w);
            ny = ny.rem_euclid(h);
        } else if nx < 0 || ny < 0 || nx >= w || ny >= h {
            return None;
        }
        Some(self.node(nx as usize, ny as usize))
    }
}

/// Markov chain over `n` nodes. Each row is an ordered list of
/// `(destination, probability)` with distinct destinations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraph {
    rows: Vec<Vec<(usize, f64)>>,
    grid: Option<GridEmbedding>,
}

fn merge_duplicates(row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (dest, p) in row {
        match merged.iter_mut().find(|(d, _)| *d == dest) {
            Some(entry) => entry.1 += p,
            None => merged.push((dest, p)),
        }
    }
    merged
}

impl TransitionGraph {
    /// Validates and normalises an explicit edge list. Duplicate destinations in
    /// a row are merged; zero-probability entries are dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self, DensityError> {
        Self::with_embedding(rows, None)
    }

    fn with_embedding(rows: Vec<Vec<(usize, f64)>>, grid: Option<GridEmbedding>) -> Result<Self, DensityError> {
        let n = rows.len();
        let mut clean = Vec::with_capacity(n);
        for (node, row) in rows.into_iter().enumerate() {
            for &(dest, p) in &row {
                if dest >= n {
                    return Err(DensityError::InvalidGraph(format!(
                        "node {node} has an edge to {dest}, graph has {n} nodes"
                    )));
                }
                if !(0.0..=1.0 + INPUT_TOLERANCE).contains(&p) || p.is_nan() {
                    return Err(DensityError::InvalidGraph(format!(
                        "node {node} has probability {p} to {dest}"
                    )));
                }
            }
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > INPUT_TOLERANCE {
                return Err(DensityError::InvalidGraph(format!(
                    "row {node} sums to {sum}"
                )));
            }
            let merged: Vec<(usize, f64)> = merge_duplicates(row).into_iter().filter(|&(_, p)| p > 0.0).collect();
            clean.push(merged);
        }
        let graph = Self { rows: clean, grid };
        graph.validate()?;
        Ok(graph)
    }

    /// Ring of `n` nodes; node `i` steps to `i - 1` with `p_left`, to `i + 1`
    /// with `p_right` and stays with the remainder.
    pub fn cycle(n: usize, p_left: f64, p_right: f64) -> Result<Self, DensityError> {
        if n == 0 {
            return Err(DensityError::InvalidGraph("cycle needs at least one node".into()));
        }
        let stay = 1.0 - p_left - p_right;
        if p_left < 0.0 || p_right < 0.0 || stay < -INPUT_TOLERANCE {
            return Err(DensityError::InvalidGraph(format!(
                "cycle probabilities ({p_left}, {p_right}) are invalid"
            )));
        }
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![((i + n - 1) % n, p_left), ((i + 1) % n, p_right)];
                if stay > 0.0 {
                    row.push((i, stay));
                }
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, node: usize) -> &[(usize, f64)] {
        &self.rows[node]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn grid(&self) -> Option<&GridEmbedding> {
        self.grid.as_ref()
    }

    pub fn is_obstacle(&self, node: usize) -> bool {
        self.grid.as_ref().is_some_and(|g| g.obstacles.contains(&node))
    }

    /// Rows sum to 1 and no mass flows into an obstacle from another node.
    pub fn validate(&self) -> Result<(), DensityError> {
        for (node, row) in self.rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(DensityError::InvalidGraph(format!("row {node} sums to {sum}")));
            }
            for &(dest, p) in row {
                if dest != node && p > 0.0 && self.is_obstacle(dest) {
                    return Err(DensityError::InvalidGraph(format!(
                        "node {node} sends mass into obstacle {dest}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Moves the mass of blocked directions onto open ones: each blocked direction
/// splits evenly between its two perpendiculars, and a half that lands on a
/// blocked perpendicular is shared evenly by every open direction. Returns `None`
/// when every direction is blocked.
pub fn redistribute_blocked(probs: [f64; 4], open: [bool; 4]) -> Option<[f64; 4]> {
    let open_dirs: Vec<usize> = (0..4).filter(|&d| open[d]).collect();
    if open_dirs.is_empty() {
        return None;
    }
    let mut out = [0.0; 4];
    let spread = |out: &mut [f64; 4], mass: f64| {
        for &d in &open_dirs {
            out[d] += mass / open_dirs.len() as f64;
        }
    };
    for d in 0..4 {
        if open[d] {
            out[d] += probs[d];
            continue;
        }
        for &perp in &PERPENDICULAR[d] {
            if open[perp] {
                out[perp] += probs[d] / 2.0;
            } else {
                spread(&mut out, probs[d] / 2.0);
            }
        }
    }
    Some(out)
}

/// 4-neighbour grid walk with direction probabilities `(up, down, left, right)`.
/// Obstacles and (without wrapping) the outer edge act as walls. Obstacle nodes
/// themselves get a self-loop and no incoming mass.
pub fn build_grid_topology(
    width: usize,
    height: usize,
    dir_probs: [f64; 4],
    torus: bool,
    obstacles: &BTreeSet<usize>,
) -> Result<TransitionGraph, DensityError> {
    if width == 0 || height == 0 {
        return Err(DensityError::InvalidGraph("grid must be at least 1x1".into()));
    }
    if dir_probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(DensityError::InvalidGraph(format!(
            "direction probabilities {dir_probs:?} must lie in [0, 1]"
        )));
    }
    let sum: f64 = dir_probs.iter().sum();
    if (sum - 1.0).abs() > INPUT_TOLERANCE {
        return Err(DensityError::InvalidGraph(format!(
            "direction probabilities sum to {sum}"
        )));
    }
    let n = width * height;
    if let Some(&bad) = obstacles.iter().find(|&&o| o >= n) {
        return Err(DensityError::InvalidGraph(format!("obstacle {bad} is outside the {width}x{height} grid")));
    }
    if obstacles.len() == n {
        return Err(DensityError::InvalidGraph("obstacles cover every cell".into()));
    }
    let embedding = GridEmbedding {
        width,
        height,
        torus,
        obstacles: obstacles.clone(),
    };
    let rows = (0..n)
        .map(|node| {
            if obstacles.contains(&node) {
                return vec![(node, 1.0)];
            }
            let targets: [Option<usize>; 4] =
                std::array::from_fn(|d| embedding.neighbor(node, d).filter(|t| !obstacles.contains(t)));
            let open = targets.map(|t| t.is_some());
            match redistribute_blocked(dir_probs, open) {
                Some(p) => (0..4)
                    .filter_map(|d| targets[d].map(|t| (t, p[d])))
                    .collect(),
                None => vec![(node, 1.0)],
            }
        })
        .collect();
    TransitionGraph::with_embedding(rows, Some(embedding))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn uniform_torus_rows() {
        let g = build_grid_topology(3, 3, [0.25; 4], true, &BTreeSet::new()).unwrap();
        for node in 0..9 {
            let row = g.row(node);
            assert_eq!(row.len(), 4);
            assert!(row.iter().all(|&(_, p)| close(p, 0.25)));
        }
        // (1,1) -> up (1,0), down (1,2), left (0,1), right (2,1)
        let dests: Vec<usize> = g.row(4).iter().map(|&(d, _)| d).collect();
        assert_eq!(dests, vec![1, 7, 3, 5]);
    }

    #[test]
    fn wall_above_splits_to_sides() {
        let p = redistribute_blocked([0.35, 0.35, 0.15, 0.15], [false, true, true, true]).unwrap();
        let expected = [0.0, 0.35, 0.325, 0.325];
        for d in 0..4 {
            assert!(close(p[d], expected[d]), "{p:?}");
        }
    }

    #[test]
    fn wall_in_corner_shares_blocked_half() {
        // up and left blocked: up's half bound for left and left's half bound
        // for up both go to the open directions evenly.
        let p = redistribute_blocked([0.4, 0.2, 0.2, 0.2], [false, true, false, true]).unwrap();
        assert!(close(p[1], 0.2 + 0.1 + 0.1 + 0.05));
        assert!(close(p[3], 0.2 + 0.2 + 0.1 + 0.05));
        assert!(close(p.iter().sum::<f64>(), 1.0));
        assert_eq!(redistribute_blocked([0.25; 4], [false; 4]), None);
    }

    #[test]
    fn obstacle_above_in_grid() {
        let obstacles = BTreeSet::from([1]);
        let g = build_grid_topology(3, 3, [0.35, 0.35, 0.15, 0.15], true, &obstacles).unwrap();
        let row = g.row(4);
        let lookup = |dest| row.iter().find(|&&(d, _)| d == dest).map(|&(_, p)| p);
        assert_eq!(lookup(1), None);
        assert!(close(lookup(7).unwrap(), 0.35));
        assert!(close(lookup(3).unwrap(), 0.325));
        assert!(close(lookup(5).unwrap(), 0.325));
        assert_eq!(g.row(1), &[(1, 1.0)]);
    }

    #[test]
    fn non_torus_edges_are_walls() {
        let g = build_grid_topology(2, 1, [0.25; 4], false, &BTreeSet::new()).unwrap();
        // node 0 can only move right
        assert_eq!(g.row(0), &[(1, 1.0)]);
        let single = build_grid_topology(1, 1, [0.25; 4], false, &BTreeSet::new()).unwrap();
        assert_eq!(single.row(0), &[(0, 1.0)]);
    }

    #[test]
    fn enclosed_cell_self_loops() {
        let obstacles = BTreeSet::from([1, 3, 5, 7]);
        let g = build_grid_topology(3, 3, [0.25; 4], true, &obstacles).unwrap();
        assert_eq!(g.row(4), &[(4, 1.0)]);
    }

    #[test]
    fn narrow_torus_merges_duplicates() {
        let g = build_grid_topology(2, 1, [0.1, 0.2, 0.3, 0.4], true, &BTreeSet::new()).unwrap();
        // up and down wrap onto the node itself; left and right both reach node 1
        assert_eq!(g.row(0).len(), 2);
        assert!(close(g.row(0)[0].1, 0.3));
        assert!(close(g.row(0)[1].1, 0.7));
    }

    #[test]
    fn invalid_grids() {
        assert!(build_grid_topology(3, 3, [0.3, 0.3, 0.3, 0.3], true, &BTreeSet::new()).is_err());
        assert!(build_grid_topology(1, 1, [0.25; 4], true, &BTreeSet::from([0])).is_err());
        assert!(build_grid_topology(2, 2, [0.25; 4], true, &BTreeSet::from([4])).is_err());
    }

    #[test]
    fn cycle_rows() {
        let g = TransitionGraph::cycle(24, 0.5, 0.5).unwrap();
        assert_eq!(g.row(0), &[(23, 0.5), (1, 0.5)]);
        let lazy = TransitionGraph::cycle(5, 0.25, 0.25).unwrap();
        assert_eq!(lazy.row(2), &[(1, 0.25), (3, 0.25), (2, 0.5)]);
        assert!(TransitionGraph::cycle(5, 0.7, 0.5).is_err());
    }

    #[test]
    fn explicit_rows_are_checked() {
        assert!(TransitionGraph::from_rows(vec![vec![(0, 0.5)]]).is_err());
        assert!(TransitionGraph::from_rows(vec![vec![(1, 1.0)]]).is_err());
        assert!(TransitionGraph::from_rows(vec![vec![(0, 1.2), (0, -0.2)]]).is_err());
        let g = TransitionGraph::from_rows(vec![vec![(1, 0.5), (1, 0.5)], vec![(0, 1.0), (1, 0.0)]]).unwrap();
        assert_eq!(g.row(0), &[(1, 1.0)]);
        assert_eq!(g.row(1), &[(0, 1.0)]);
    }
}
