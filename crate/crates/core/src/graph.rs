//! Directed interaction graphs.
//!
//! Vertex ids are 1-based at every public boundary (constructors, neighbor
//! queries, serialized files). [`Edge`] stores 0-based indices for matrix
//! assembly and is only exposed through `tail_index`/`head_index`.

use std::collections::{HashSet, VecDeque};

use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("a graph needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("edge #{index} ({tail}, {head}) is a self-loop")]
    SelfLoop { index: usize, tail: usize, head: usize },
    #[error("edge #{index} ({tail}, {head}) duplicates an earlier edge")]
    DuplicateEdge { index: usize, tail: usize, head: usize },
    #[error("vertex id {id} is outside 1..={n}")]
    InvalidVertex { id: usize, n: usize },
}

/// A directed edge `tail -> head`, stored with 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    tail: usize,
    head: usize,
}

impl Edge {
    pub fn tail_index(&self) -> usize {
        self.tail
    }

    pub fn head_index(&self) -> usize {
        self.head
    }

    /// `(tail, head)` as 1-based vertex ids.
    pub fn ids(&self) -> (usize, usize) {
        (self.tail + 1, self.head + 1)
    }
}

/// Fixed directed graph with an ordered edge list.
///
/// The edge order is the order given at construction and fixes the row order
/// of the incidence and rigidity matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl DirectedGraph {
    /// Builds a graph from 1-based `(tail, head)` pairs.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewVertices(n));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut out = Vec::with_capacity(edges.len());
        for (index, &(tail, head)) in edges.iter().enumerate() {
            for id in [tail, head] {
                if id == 0 || id > n {
                    return Err(GraphError::InvalidVertex { id, n });
                }
            }
            if tail == head {
                return Err(GraphError::SelfLoop { index, tail, head });
            }
            if !seen.insert((tail, head)) {
                return Err(GraphError::DuplicateEdge { index, tail, head });
            }
            out.push(Edge {
                tail: tail - 1,
                head: head - 1,
            });
        }
        Ok(Self { n, edges: out })
    }

    /// Undirected graph: every pair contributes both `(i, j)` and `(j, i)`.
    pub fn undirected(n: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        let doubled: Vec<_> = pairs.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
        Self::new(n, &doubled)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge list as 1-based pairs, in edge order.
    pub fn edge_ids(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(Edge::ids).collect()
    }

    fn check_vertex(&self, id: usize) -> Result<usize, GraphError> {
        if id == 0 || id > self.n {
            Err(GraphError::InvalidVertex { id, n: self.n })
        } else {
            Ok(id - 1)
        }
    }

    /// Heads of the edges leaving `id`, in edge-list order (1-based).
    pub fn out_neighbors(&self, id: usize) -> Result<Vec<usize>, GraphError> {
        let i = self.check_vertex(id)?;
        Ok(self
            .edges
            .iter()
            .filter(|e| e.tail == i)
            .map(|e| e.head + 1)
            .collect())
    }

    /// Indices (into [`Self::edges`]) of the edges leaving 0-based vertex `i`.
    pub(crate) fn outgoing_edge_indices(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.tail == i)
            .map(|(k, _)| k)
    }

    pub fn out_degree(&self, id: usize) -> Result<usize, GraphError> {
        let i = self.check_vertex(id)?;
        Ok(self.edges.iter().filter(|e| e.tail == i).count())
    }

    /// True when every edge has its reverse in the graph.
    pub fn is_undirected(&self) -> bool {
        let set: HashSet<_> = self.edges.iter().map(|e| (e.tail, e.head)).collect();
        self.edges.iter().all(|e| set.contains(&(e.head, e.tail)))
    }

    /// Connectivity of the underlying undirected graph.
    pub fn is_weakly_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.tail].push(e.head);
            adj[e.head].push(e.tail);
        }
        let mut visited = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    /// `m x n` incidence matrix: row `k` has `-1` at the tail and `+1` at the head.
    pub fn incidence_matrix(&self) -> Matrix {
        let mut h = Matrix::zeros(self.edges.len(), self.n);
        for (k, e) in self.edges.iter().enumerate() {
            h[(k, e.tail)] = -1.0;
            h[(k, e.head)] = 1.0;
        }
        h
    }

    /// `H ⊗ I_d`, mapping stacked positions to stacked edge vectors.
    pub fn expand(&self, d: usize) -> Matrix {
        self.incidence_matrix().kronecker(&Matrix::identity(d, d))
    }
}
