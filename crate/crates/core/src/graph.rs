//! Directed weighted sensor graphs and the structural predicates the
//! estimator's convergence conditions are stated in terms of.
//!
//! Orientation: `weights[(i, j)]` is the weight sensor `i` applies to data
//! received from its parent `j`. An arrow `j -> i` in a drawing of the
//! network therefore lands at row `i`, column `j`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Absolute tolerance used when comparing weighted in/out degrees.
pub const BALANCE_TOL: f64 = 1e-12;

/// Number of re-draws attempted by [`random_geometric`] before giving up.
pub const GEOMETRIC_MAX_ATTEMPTS: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("self loop at node {0}")]
    SelfLoop(usize),
    #[error("invalid weight {weight} on edge {from} -> {to}")]
    InvalidWeight { from: usize, to: usize, weight: f64 },
    #[error("node index {index} out of range for graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("graph is not balanced; the mirror Laplacian is not a graph Laplacian")]
    NotBalanced,
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error("no connected geometric graph after {attempts} attempts (n={n}, radius={radius})")]
    NotConnected { n: usize, radius: f64, attempts: u64 },
}

/// A directed weighted graph over `n` sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGraph {
    weights: DMatrix<f64>,
}

/// `L = D - A` and its symmetric part `(L + L^T) / 2`.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub laplacian: DMatrix<f64>,
    pub mirror: DMatrix<f64>,
}

impl SensorGraph {
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = weights.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::InvalidWeight { from: j, to: i, weight: w });
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLoop(i));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        Self::from_weights(DMatrix::zeros(n, n))
    }

    /// Builds a graph from `(from, to, weight)` arrows with 0-based node
    /// indices. Repeated arrows accumulate.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut w = DMatrix::zeros(n, n);
        for &(from, to, weight) in edges {
            for idx in [from, to] {
                if idx >= n {
                    return Err(GraphError::IndexOutOfRange { index: idx, n });
                }
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(GraphError::InvalidWeight { from, to, weight });
            }
            w[(to, from)] += weight;
        }
        Self::from_weights(w)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `a_{i,j}`: weight node `i` puts on parent `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    fn check_index(&self, i: usize) -> Result<(), GraphError> {
        if i >= self.n() {
            Err(GraphError::IndexOutOfRange { index: i, n: self.n() })
        } else {
            Ok(())
        }
    }

    /// Nodes `j` with `a_{i,j} > 0`, ascending.
    pub fn parents(&self, i: usize) -> Result<Vec<usize>, GraphError> {
        self.check_index(i)?;
        Ok((0..self.n()).filter(|&j| self.weights[(i, j)] > 0.0).collect())
    }

    /// Nodes `j` with `a_{j,i} > 0`, ascending.
    pub fn children(&self, i: usize) -> Result<Vec<usize>, GraphError> {
        self.check_index(i)?;
        Ok((0..self.n()).filter(|&j| self.weights[(j, i)] > 0.0).collect())
    }

    /// `(parent, weight)` pairs for every node, computed once.
    pub fn parent_lists(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.n())
            .map(|i| {
                (0..self.n())
                    .filter_map(|j| {
                        let w = self.weights[(i, j)];
                        (w > 0.0).then_some((j, w))
                    })
                    .collect()
            })
            .collect()
    }

    /// `|N_i^c|` for every node.
    pub fn child_counts(&self) -> Vec<usize> {
        (0..self.n()).map(|i| (0..self.n()).filter(|&j| self.weights[(j, i)] > 0.0).count()).collect()
    }

    /// Number of directed edges with positive weight.
    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// Weighted in-degree `sum_j a_{i,j}` (row sums).
    pub fn in_weights(&self) -> Vec<f64> {
        self.weights.row_iter().map(|r| r.sum()).collect()
    }

    /// Weighted out-degree `sum_j a_{j,i}` (column sums).
    pub fn out_weights(&self) -> Vec<f64> {
        self.weights.column_iter().map(|c| c.sum()).collect()
    }

    pub fn laplacian(&self) -> LaplacianPair {
        let n = self.n();
        let mut laplacian = -self.weights.clone();
        for i in 0..n {
            // Diagonal from the off-diagonal entries of the same row so the
            // row sum cancels in floating point.
            let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| self.weights[(i, j)]).sum();
            laplacian[(i, i)] = row_sum;
        }
        let mirror = (&laplacian + laplacian.transpose()) * 0.5;
        LaplacianPair { laplacian, mirror }
    }

    pub fn is_balanced(&self) -> bool {
        self.in_weights().iter().zip(self.out_weights()).all(|(a, b)| (a - b).abs() <= BALANCE_TOL)
    }

    /// Nodes reachable from `root` following information flow `j -> i`
    /// whenever `a_{i,j} > 0`.
    fn reachable_from(&self, root: usize) -> Vec<bool> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !seen[i] && self.weights[(i, j)] > 0.0 {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen
    }

    /// True iff some root reaches every node along directed edges.
    pub fn has_spanning_tree(&self) -> bool {
        (0..self.n()).any(|r| self.reachable_from(r).iter().all(|&s| s))
    }

    /// Connectivity of the undirected mirror graph (edge iff `a_{i,j} + a_{j,i} > 0`).
    pub fn mirror_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !seen[i] && (self.weights[(i, j)] + self.weights[(j, i)]) > 0.0 {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Second-smallest eigenvalue of the mirror Laplacian. Requires a
    /// balanced graph. A single node has no second eigenvalue and yields 0.
    pub fn lambda2_mirror(&self) -> Result<f64, GraphError> {
        if !self.is_balanced() {
            return Err(GraphError::NotBalanced);
        }
        if self.n() < 2 {
            return Ok(0.0);
        }
        let mut eig: Vec<f64> = SymmetricEigen::new(self.laplacian().mirror).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        // Clamp rounding noise around a zero eigenvalue.
        Ok(if eig[1].abs() < 1e-12 { 0.0 } else { eig[1] })
    }

    /// Arrow list `(from, to, weight)` with 0-based indices.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for from in 0..n {
            for to in 0..n {
                let w = self.weights[(to, from)];
                if w > 0.0 {
                    out.push((from, to, w));
                }
            }
        }
        out
    }
}

/// Random geometric graph in the unit square: nodes within Euclidean
/// distance `radius` are joined in both directions with weight 1.
///
/// Attempt `k` draws positions from stream `k` of a ChaCha generator keyed
/// by `seed`, so the result depends only on `(n, radius, seed)`.
pub fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<SensorGraph, GraphError> {
    if n == 0 {
        return Err(GraphError::Empty);
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GraphError::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let r2 = radius * radius;
    for attempt in 0..GEOMETRIC_MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                if dx * dx + dy * dy <= r2 {
                    w[(i, j)] = 1.0;
                    w[(j, i)] = 1.0;
                }
            }
        }
        let g = SensorGraph::from_weights(w)?;
        if g.mirror_connected() {
            return Ok(g);
        }
    }
    Err(GraphError::NotConnected { n, radius, attempts: GEOMETRIC_MAX_ATTEMPTS })
}

/// The seven-sensor balanced digraph used by the first bundled example.
pub fn seven_node_graph() -> SensorGraph {
    const ARROWS: [(usize, usize, f64); 11] = [
        (1, 2, 2.0),
        (1, 4, 1.0),
        (2, 4, 1.0),
        (2, 5, 1.0),
        (3, 1, 1.0),
        (4, 6, 3.0),
        (4, 7, 1.0),
        (5, 4, 2.0),
        (6, 1, 2.0),
        (6, 3, 1.0),
        (7, 5, 1.0),
    ];
    let edges: Vec<_> = ARROWS.iter().map(|&(f, t, w)| (f - 1, t - 1, w)).collect();
    SensorGraph::from_edges(7, &edges).expect("static edge list is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(v: Vec<usize>) -> Vec<usize> {
        v.into_iter().map(|i| i + 1).collect()
    }

    #[test]
    fn parents_and_children_of_node_four() {
        let g = seven_node_graph();
        assert_eq!(one_based(g.parents(3).unwrap()), vec![1, 2, 5]);
        assert_eq!(one_based(g.children(3).unwrap()), vec![6, 7]);
        assert_eq!(g.weight(1, 0), 2.0);
    }

    #[test]
    fn parents_of_edgeless_graph_is_empty() {
        let g = SensorGraph::empty(3).unwrap();
        assert!(g.parents(0).unwrap().is_empty());
    }

    #[test]
    fn parents_out_of_range() {
        let g = SensorGraph::empty(3).unwrap();
        assert_eq!(g.parents(3), Err(GraphError::IndexOutOfRange { index: 3, n: 3 }));
        assert!(g.children(7).is_err());
    }

    #[test]
    fn rejects_self_loops_and_negative_weights() {
        assert_eq!(SensorGraph::from_edges(2, &[(0, 0, 1.0)]), Err(GraphError::SelfLoop(0)));
        assert!(matches!(SensorGraph::from_edges(2, &[(0, 1, -1.0)]), Err(GraphError::InvalidWeight { .. })));
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 1)] = 1.0;
        assert_eq!(SensorGraph::from_weights(w), Err(GraphError::SelfLoop(1)));
        assert_eq!(SensorGraph::empty(0), Err(GraphError::Empty));
    }

    #[test]
    fn two_node_laplacian() {
        let g = SensorGraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let lp = g.laplacian();
        assert_eq!(lp.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(lp.mirror, lp.laplacian);
        assert!((g.lambda2_mirror().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn seven_node_degrees() {
        let g = seven_node_graph();
        let expected = [3.0, 2.0, 1.0, 4.0, 2.0, 3.0, 1.0];
        assert_eq!(g.in_weights(), expected);
        assert_eq!(g.out_weights(), expected);
        assert!(g.is_balanced());
        assert!(g.has_spanning_tree());
        assert_eq!(g.edge_count(), 11);
        let lp = g.laplacian();
        for r in lp.laplacian.row_iter() {
            assert_eq!(r.sum(), 0.0);
        }
        for c in lp.laplacian.column_iter() {
            assert_eq!(c.sum(), 0.0);
        }
    }

    #[test]
    fn balance_predicate() {
        let single = SensorGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert!(!single.is_balanced());
        assert_eq!(single.lambda2_mirror(), Err(GraphError::NotBalanced));
        let sym = SensorGraph::from_edges(3, &[(0, 1, 0.5), (1, 0, 0.5), (1, 2, 2.0), (2, 1, 2.0)]).unwrap();
        assert!(sym.is_balanced());
    }

    #[test]
    fn spanning_tree_predicate() {
        assert!(!SensorGraph::empty(2).unwrap().has_spanning_tree());
        let cycle = SensorGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        assert!(cycle.has_spanning_tree());
        // Two sources feeding one sink: no single root reaches everything.
        let inward = SensorGraph::from_edges(3, &[(0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(!inward.has_spanning_tree());
        let star = SensorGraph::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        assert!(star.has_spanning_tree());
        assert!(SensorGraph::empty(1).unwrap().has_spanning_tree());
    }

    #[test]
    fn disconnected_pairs_have_zero_lambda2() {
        let g = SensorGraph::from_edges(4, &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]).unwrap();
        assert_eq!(g.lambda2_mirror().unwrap(), 0.0);
        assert!(!g.mirror_connected());
    }

    #[test]
    fn geometric_small_cases() {
        let g = random_geometric(1, 0.3, 1).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.edge_count(), 0);
        let g = random_geometric(2, 2.0, 1).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(random_geometric(0, 0.3, 1).is_err());
        assert!(random_geometric(3, 0.0, 1).is_err());
    }

    #[test]
    fn geometric_gives_up_when_radius_too_small() {
        let err = random_geometric(50, 1e-4, 3).unwrap_err();
        assert!(matches!(err, GraphError::NotConnected { attempts: GEOMETRIC_MAX_ATTEMPTS, .. }));
    }

    #[test]
    fn geometric_is_deterministic() {
        let a = random_geometric(30, 0.35, 11).unwrap();
        let b = random_geometric(30, 0.35, 11).unwrap();
        assert_eq!(a, b);
    }
}
