//! Undirected simple graphs with dense adjacency, plus the virtual-node
//! augmentation.
//!
//! Adjacency is stored densely (`n <= 2000` is the working scale). A graph is
//! immutable after construction.

mod generate;
mod io;

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::Mat;

pub use generate::{generate, GenKind, GenSpec};
pub use io::{load_edge_list, write_edge_list};

/// Hop distance reported for nodes that cannot be reached.
pub const UNREACHABLE: usize = usize::MAX;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },
    #[error("edge ({u}, {v}) references a node outside 0..{n}")]
    NodeOutOfRange { u: usize, v: usize, n: usize },
    #[error("invalid generator: {0}")]
    InvalidSpec(String),
    #[error("could not sample a connected graph in {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("graph already carries a virtual node")]
    AlreadyAugmented,
    #[error("empty graph")]
    Empty,
}

/// Undirected graph on nodes `0..n`.
///
/// When `has_vn` is set, node `n - 1` is the virtual node: it is adjacent to
/// every other node and carries a unit self-loop, so the adjacency is exactly
/// the block matrix `[[A, 1], [1^T, 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Mat,
    degrees: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    edge_count: usize,
    has_vn: bool,
}

impl Graph {
    /// Builds a simple graph. Duplicate edges collapse; self-loops are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut clean = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::NodeOutOfRange { u, v, n });
            }
            if u == v {
                return Err(GraphError::SelfLoop { line: 0, node: u });
            }
            clean.push((u.min(v), u.max(v)));
        }
        clean.sort_unstable();
        clean.dedup();
        Ok(Self::assemble(n, clean, false))
    }

    fn assemble(n: usize, edges: Vec<(usize, usize)>, has_vn: bool) -> Self {
        let mut adjacency = Mat::zeros(n, n);
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[(u, v)] = 1.0;
            adjacency[(v, u)] = 1.0;
            if u != v {
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let degrees = (0..n).map(|i| adjacency.row(i).sum()).collect();
        let edge_count = edges.len();
        Graph {
            n,
            edges,
            adjacency,
            degrees,
            neighbors,
            edge_count,
            has_vn,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edge list with `u <= v`, sorted. Includes the VN self-loop when present.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    /// Adjacency row sums; the VN self-loop counts once.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    /// Neighbours of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Number of stored edges, self-loops counted once.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Edge count used by the commute-time identity `tau = 2 |E| R`. On an
    /// augmented graph this is `|E| + n`: the VN self-loop is excluded.
    pub fn commute_edge_count(&self) -> usize {
        if self.has_vn {
            self.edge_count - 1
        } else {
            self.edge_count
        }
    }

    /// Sum of degrees, the normaliser of the simple random walk.
    pub fn volume(&self) -> f64 {
        self.degrees.iter().sum()
    }

    pub fn has_vn(&self) -> bool {
        self.has_vn
    }

    /// Index of the virtual node, if any.
    pub fn vn_index(&self) -> Option<usize> {
        self.has_vn.then(|| self.n - 1)
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_distance(0).iter().all(|&d| d != UNREACHABLE)
    }

    /// Hop distances from `source`; unreachable nodes get [`UNREACHABLE`].
    pub fn bfs_distance(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![UNREACHABLE; self.n];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Combinatorial Laplacian `L = D - A`. On an augmented graph the VN
    /// self-loop cancels on the diagonal, giving `[[L + I, -1], [-1^T, n]]`.
    pub fn laplacian(&self) -> Mat {
        let mut l = -self.adjacency.clone();
        for i in 0..self.n {
            l[(i, i)] += self.degrees[i];
        }
        l
    }

    /// Adds a virtual node adjacent to every node, with a unit self-loop.
    pub fn augment_with_vn(&self) -> Result<Graph, GraphError> {
        if self.has_vn {
            return Err(GraphError::AlreadyAugmented);
        }
        let vn = self.n;
        let mut edges = self.edges.clone();
        edges.extend((0..self.n).map(|i| (i, vn)));
        edges.push((vn, vn));
        edges.sort_unstable();
        Ok(Self::assemble(self.n + 1, edges, true))
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph, GraphError> {
        assert_eq!(perm.len(), self.n, "permutation length");
        if self.has_vn {
            return Err(GraphError::AlreadyAugmented);
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(u, v)| (perm[u], perm[v]))
            .collect();
        Graph::from_edges(self.n, &edges)
    }

    pub fn summary(&self, graph_id: &str) -> GraphSummary {
        GraphSummary {
            graph_id: graph_id.to_string(),
            n: self.n,
            edge_count: self.edge_count,
            commute_edge_count: self.commute_edge_count(),
            connected: self.is_connected(),
            has_vn: self.has_vn,
            min_degree: self.degrees.iter().copied().fold(f64::INFINITY, f64::min),
            max_degree: self.degrees.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub graph_id: String,
    pub n: usize,
    pub edge_count: usize,
    pub commute_edge_count: usize,
    pub connected: bool,
    pub has_vn: bool,
    pub min_degree: f64,
    pub max_degree: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        generate(&GenSpec::path(n)).unwrap()
    }

    #[test]
    fn bfs_on_path_and_complete() {
        assert_eq!(path(3).bfs_distance(0), vec![0, 1, 2]);
        let k4 = generate(&GenSpec::complete(4)).unwrap();
        assert_eq!(k4.bfs_distance(2), vec![1, 1, 0, 1]);
    }

    #[test]
    fn bfs_unreachable() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let d = g.bfs_distance(0);
        assert_eq!(d[1], 1);
        assert_eq!(d[2], UNREACHABLE);
        assert!(!g.is_connected());
    }

    #[test]
    fn laplacian_small_cases() {
        let l = path(2).laplacian();
        assert_eq!(l, Mat::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let c4 = generate(&GenSpec::cycle(4)).unwrap().laplacian();
        for i in 0..4 {
            assert_eq!(c4[(i, i)], 2.0);
            assert_eq!(c4[(i, (i + 1) % 4)], -1.0);
            assert_eq!(c4[(i, (i + 2) % 4)], 0.0);
        }
    }

    #[test]
    fn augmented_p2_is_triangle_with_loop() {
        let g = path(2).augment_with_vn().unwrap();
        assert_eq!(g.n(), 3);
        assert!(g.has_vn());
        assert_eq!(g.adjacency()[(2, 2)], 1.0);
        assert_eq!(g.degree(2), 3.0);
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.commute_edge_count(), 3);
        let expected = Mat::from_row_slice(
            3,
            3,
            &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0],
        );
        assert_eq!(g.laplacian(), expected);
    }

    #[test]
    fn augmented_k4_corner() {
        let g = generate(&GenSpec::complete(4))
            .unwrap()
            .augment_with_vn()
            .unwrap();
        let l = g.laplacian();
        assert_eq!(l[(4, 4)], 4.0);
        for i in 0..4 {
            assert_eq!(l[(i, i)], 4.0);
            assert_eq!(l[(i, 4)], -1.0);
        }
    }

    #[test]
    fn augmented_star_edge_count() {
        let g = generate(&GenSpec::star(4)).unwrap();
        assert_eq!(g.edge_count(), 3);
        let vn = g.augment_with_vn().unwrap();
        assert_eq!(vn.commute_edge_count(), 7);
        assert!(vn.neighbors(4).len() == 4);
    }

    #[test]
    fn double_augmentation_rejected() {
        let g = path(3).augment_with_vn().unwrap();
        assert!(matches!(
            g.augment_with_vn(),
            Err(GraphError::AlreadyAugmented)
        ));
    }

    #[test]
    fn self_loop_rejected() {
        assert!(Graph::from_edges(2, &[(1, 1)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 2)]).is_err());
    }
}
