//! Undirected communication graph plus the spectral quantities the consensus
//! error analysis needs: the Laplacian, its algebraic connectivity, and the
//! gains of the centered adjacency operators.
//!
//! Node indices are 0-based throughout the Rust API. Configuration files and
//! CSV logs use 1-based indices; conversion happens at the I/O boundary and
//! nowhere else.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg;

/// Eigenvalues below this (relative to the spectral radius) count as zero
/// when deciding connectivity from the Laplacian spectrum.
const SPECTRAL_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node index {0} out of range for a graph on {1} nodes")]
    OutOfRange(usize, usize),
    #[error("self-loop on node {0} (1-based) is not allowed")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1}) (1-based)")]
    DuplicateEdge(usize, usize),
    #[error("graph must have at least one node")]
    Empty,
}

/// Simple undirected graph without self-loops or multi-edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    /// Normalized edge list, each pair stored once with `a < b`.
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor list per node.
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Build from 0-based endpoints. Rejects self-loops, duplicates, and
    /// out-of-range indices.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            if a >= node_count {
                return Err(GraphError::OutOfRange(a, node_count));
            }
            if b >= node_count {
                return Err(GraphError::OutOfRange(b, node_count));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a + 1));
            }
            let pair = (a.min(b), a.max(b));
            if normalized.contains(&pair) {
                return Err(GraphError::DuplicateEdge(pair.0 + 1, pair.1 + 1));
            }
            normalized.push(pair);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        normalized.sort_unstable();
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { node_count, edges: normalized, neighbors })
    }

    /// Build from the 1-based edge list used in configuration files.
    pub fn from_one_based_edges(
        node_count: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let shifted: Result<Vec<(usize, usize)>, GraphError> = edges
            .iter()
            .map(|&(a, b)| {
                if a == 0 || b == 0 {
                    Err(GraphError::OutOfRange(0, node_count))
                } else {
                    Ok((a - 1, b - 1))
                }
            })
            .collect();
        Self::new(node_count, &shifted?)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbor set of node `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.neighbors
            .get(i)
            .map(Vec::as_slice)
            .ok_or(GraphError::OutOfRange(i, self.node_count))
    }

    /// Degree of node `i` (panics on out-of-range; use `neighbors` for a
    /// checked variant).
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.node_count;
        let mut a = DMatrix::zeros(n, n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Graph Laplacian `Q = D - A`. Symmetric PSD with zero row sums.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count;
        let mut q = -self.adjacency_matrix();
        for i in 0..n {
            q[(i, i)] = self.degree(i) as f64;
        }
        q
    }

    /// BFS connectivity. A single-node graph counts as connected.
    pub fn is_connected(&self) -> bool {
        let n = self.node_count;
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// Second-smallest Laplacian eigenvalue. Strictly positive iff the graph
    /// is connected; exactly 0.0 is returned for disconnected graphs. The
    /// degenerate single-node graph has no consensus error at all and reports
    /// infinity.
    pub fn algebraic_connectivity(&self) -> f64 {
        if self.node_count == 1 {
            return f64::INFINITY;
        }
        let vals = linalg::symmetric_eigenvalues(&self.laplacian());
        let scale = vals.last().copied().unwrap_or(1.0).max(1.0);
        let lambda2 = vals[1];
        if lambda2.abs() <= SPECTRAL_ZERO_TOL * scale {
            0.0
        } else {
            lambda2
        }
    }

    /// Largest singular values of the centered adjacency operators
    /// `H A ⊗ I_n` and `(1^T A / N) ⊗ I_n`, with `H = I - (1/N) 1 1^T`.
    ///
    /// A Kronecker product with the identity leaves singular values
    /// unchanged, so both are computed on the N-sized matrices regardless
    /// of the state dimension `n`.
    pub fn centering_adjacency_gain(&self, n: usize) -> (f64, f64) {
        assert!(n >= 1, "state dimension must be at least 1");
        let count = self.node_count as f64;
        let a = self.adjacency_matrix();
        let h = DMatrix::identity(self.node_count, self.node_count)
            - DMatrix::from_element(self.node_count, self.node_count, 1.0 / count);
        let ha = &h * &a;
        let ones_a = DMatrix::from_fn(1, self.node_count, |_, j| a.column(j).sum() / count);
        (linalg::sigma_max(&ha), linalg::sigma_max(&ones_a))
    }
}

/// Small topology builders. Ring/path/complete cover the common test
/// fixtures; `random` draws each possible edge independently.
pub mod generators {
    use super::Graph;
    use rand::Rng;

    pub fn ring(n: usize) -> Graph {
        assert!(n >= 3, "a ring needs at least 3 nodes");
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::new(n, &edges).expect("ring edges are valid")
    }

    pub fn path(n: usize) -> Graph {
        assert!(n >= 1);
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges).expect("path edges are valid")
    }

    pub fn complete(n: usize) -> Graph {
        assert!(n >= 1);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Graph::new(n, &edges).expect("complete-graph edges are valid")
    }

    /// Erdos-Renyi style draw: each pair becomes an edge with probability `p`.
    pub fn random(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
        assert!(n >= 1);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Graph::new(n, &edges).expect("generated edges are valid")
    }
}
