//! Arborescences and the graph operators built from them.
//!
//! Nodes and edges are indexed from zero inside the crate. The one-based
//! numbering used in configuration files and printed output is converted at
//! the boundary ([`Arborescence::from_one_based`], [`Edge::one_based`]).
//!
//! Combinatorial matrices (the incidence matrix and its left inverse) are kept
//! in integer form so identities such as `H·D = I` hold exactly.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// The root is always the first node.
pub const ROOT: usize = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("a graph needs at least one node")]
    Empty,
    #[error("expected {expected} edges for {nodes} nodes, found {found}")]
    WrongEdgeCount {
        nodes: usize,
        expected: usize,
        found: usize,
    },
    #[error("edge {} references node {node}, but nodes are numbered 1..={nodes}", .edge + 1)]
    NodeOutOfRange {
        edge: usize,
        node: usize,
        nodes: usize,
    },
    #[error("node {} is the head of more than one edge", .node + 1)]
    MultipleParents { node: usize },
    #[error("the edges contain a directed cycle through node {}", .node + 1)]
    CycleDetected { node: usize },
    #[error("node {} is not reachable from the root", .node + 1)]
    Disconnected { node: usize },
    #[error("edge index {} is out of range for {count} edges", .index + 1)]
    EdgeOutOfRange { index: usize, count: usize },
    #[error("expected {expected} weights, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("node weight {} must be strictly positive, got {value}", .index + 1)]
    NonPositiveWeight { index: usize, value: f64 },
}

/// A directed edge `tail -> head` between zero-based node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

impl Edge {
    pub fn new(tail: usize, head: usize) -> Self {
        Self { tail, head }
    }

    /// The edge as a one-based `[tail, head]` pair.
    pub fn one_based(&self) -> [usize; 2] {
        [self.tail + 1, self.head + 1]
    }
}

/// A validated rooted out-branching tree.
///
/// Edge order is the order supplied at construction and defines the edge
/// index `j` (and so the columns of the incidence matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct Arborescence {
    node_count: usize,
    edges: Vec<Edge>,
    /// Incoming edge of every node; `None` only for the root.
    parent_edge: Vec<Option<usize>>,
    /// Outgoing edges of every node, in edge order.
    child_edges: Vec<Vec<usize>>,
    /// Breadth-first node order starting at the root.
    order: Vec<usize>,
}

impl Arborescence {
    /// Validates a zero-based edge list rooted at node 0.
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        for (j, e) in edges.iter().enumerate() {
            for node in [e.tail, e.head] {
                if node >= node_count {
                    return Err(GraphError::NodeOutOfRange {
                        edge: j,
                        node: node + 1,
                        nodes: node_count,
                    });
                }
            }
        }

        let mut child_edges = vec![Vec::new(); node_count];
        let mut in_degree = vec![0usize; node_count];
        for (j, e) in edges.iter().enumerate() {
            child_edges[e.tail].push(j);
            in_degree[e.head] += 1;
        }

        // Kahn's algorithm: anything left over lies on or behind a cycle.
        let mut remaining = in_degree.clone();
        let mut queue: VecDeque<usize> = (0..node_count).filter(|&v| remaining[v] == 0).collect();
        let mut removed = 0;
        while let Some(v) = queue.pop_front() {
            removed += 1;
            for &j in &child_edges[v] {
                let h = edges[j].head;
                remaining[h] -= 1;
                if remaining[h] == 0 {
                    queue.push_back(h);
                }
            }
        }
        if removed < node_count {
            let node = find_cycle_node(node_count, &edges, &remaining);
            return Err(GraphError::CycleDetected { node });
        }

        if let Some(node) = (0..node_count).find(|&v| in_degree[v] > 1) {
            return Err(GraphError::MultipleParents { node });
        }
        if edges.len() + 1 != node_count {
            return Err(GraphError::WrongEdgeCount {
                nodes: node_count,
                expected: node_count - 1,
                found: edges.len(),
            });
        }

        let mut parent_edge = vec![None; node_count];
        for (j, e) in edges.iter().enumerate() {
            parent_edge[e.head] = Some(j);
        }

        let mut seen = vec![false; node_count];
        let mut order = Vec::with_capacity(node_count);
        let mut queue = VecDeque::from([ROOT]);
        seen[ROOT] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &j in &child_edges[v] {
                let h = edges[j].head;
                if !seen[h] {
                    seen[h] = true;
                    queue.push_back(h);
                }
            }
        }
        if let Some(node) = (0..node_count).find(|&v| !seen[v]) {
            return Err(GraphError::Disconnected { node });
        }

        Ok(Self {
            node_count,
            edges,
            parent_edge,
            child_edges,
            order,
        })
    }

    /// Validates a one-based `(tail, head)` edge list.
    pub fn from_one_based(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut converted = Vec::with_capacity(edges.len());
        for (j, &(tail, head)) in edges.iter().enumerate() {
            for node in [tail, head] {
                if node == 0 || node > node_count {
                    return Err(GraphError::NodeOutOfRange {
                        edge: j,
                        node,
                        nodes: node_count,
                    });
                }
            }
            converted.push(Edge::new(tail - 1, head - 1));
        }
        Self::new(node_count, converted)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, j: usize) -> Result<Edge, GraphError> {
        self.edges
            .get(j)
            .copied()
            .ok_or(GraphError::EdgeOutOfRange {
                index: j,
                count: self.edges.len(),
            })
    }

    /// Incoming edge of `node`, `None` for the root.
    pub fn parent_edge(&self, node: usize) -> Option<usize> {
        self.parent_edge[node]
    }

    /// Parent node of `node`, `None` for the root.
    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent_edge[node].map(|j| self.edges[j].tail)
    }

    pub fn child_edges(&self, node: usize) -> &[usize] {
        &self.child_edges[node]
    }

    /// Nodes in breadth-first order from the root; every node appears after
    /// its parent.
    pub fn traversal_order(&self) -> &[usize] {
        &self.order
    }

    /// True when no node has more than one child.
    pub fn is_chain(&self) -> bool {
        self.child_edges.iter().all(|c| c.len() <= 1)
    }

    /// Edges on the unique root-to-`node` path, listed from the root down.
    pub fn path_edges(&self, node: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut v = node;
        while let Some(j) = self.parent_edge[v] {
            path.push(j);
            v = self.edges[j].tail;
        }
        path.reverse();
        path
    }

    /// Nodes of the component of `G \ e_j` that contains the head of `e_j`,
    /// sorted ascending. Never contains the root.
    pub fn head_component(&self, j: usize) -> Result<Vec<usize>, GraphError> {
        let head = self.edge(j)?.head;
        let mut nodes = Vec::new();
        let mut stack = vec![head];
        while let Some(v) = stack.pop() {
            nodes.push(v);
            for &k in &self.child_edges[v] {
                stack.push(self.edges[k].head);
            }
        }
        nodes.sort_unstable();
        Ok(nodes)
    }

    /// Complement of [`Self::head_component`]; always contains the root.
    pub fn tail_component(&self, j: usize) -> Result<Vec<usize>, GraphError> {
        let head = self.head_component(j)?;
        let mut in_head = vec![false; self.node_count];
        for v in head {
            in_head[v] = true;
        }
        Ok((0..self.node_count).filter(|&v| !in_head[v]).collect())
    }

    pub fn incidence_matrix(&self) -> IncidenceMatrix {
        IncidenceMatrix::new(self)
    }

    pub fn left_inverse(&self) -> LeftInverse {
        LeftInverse::new(self)
    }
}

fn find_cycle_node(node_count: usize, edges: &[Edge], remaining: &[usize]) -> usize {
    // Walk backwards along unremoved edges; a node with remaining in-degree
    // always has an unremoved predecessor, so the walk must revisit a node.
    let start = (0..node_count).find(|&v| remaining[v] > 0).unwrap_or(0);
    let mut visited = vec![false; node_count];
    let mut v = start;
    while !visited[v] {
        visited[v] = true;
        match edges.iter().find(|e| e.head == v && remaining[e.tail] > 0) {
            Some(e) => v = e.tail,
            None => break,
        }
    }
    v
}

/// `D(G)`: `n × (n−1)`, column `j` holds `-1` at the tail and `+1` at the head
/// of edge `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix(DMatrix<i64>);

impl IncidenceMatrix {
    pub fn new(graph: &Arborescence) -> Self {
        let mut d = DMatrix::zeros(graph.node_count(), graph.edge_count());
        for (j, e) in graph.edges().iter().enumerate() {
            d[(e.tail, j)] = -1;
            d[(e.head, j)] = 1;
        }
        Self(d)
    }

    pub fn entries(&self) -> &DMatrix<i64> {
        &self.0
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        self.0.map(|v| v as f64)
    }

    pub fn node_count(&self) -> usize {
        self.0.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.0.ncols()
    }
}

/// `H(G)`: `(n−1) × n`, entry `(i, v)` is 1 when node `v` lies in the head
/// component of `G \ e_i`. Satisfies `H·D = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftInverse(DMatrix<i64>);

impl LeftInverse {
    pub fn new(graph: &Arborescence) -> Self {
        let mut h = DMatrix::zeros(graph.edge_count(), graph.node_count());
        for j in 0..graph.edge_count() {
            for v in graph.head_component(j).expect("edge index in range") {
                h[(j, v)] = 1;
            }
        }
        Self(h)
    }

    pub fn entries(&self) -> &DMatrix<i64> {
        &self.0
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        self.0.map(|v| v as f64)
    }
}

/// Edge-weighted graph Laplacian `D·diag(w)·Dᵀ`.
pub fn weighted_graph_laplacian(
    d: &IncidenceMatrix,
    edge_weights: &[f64],
) -> Result<DMatrix<f64>, GraphError> {
    if edge_weights.len() != d.edge_count() {
        return Err(GraphError::DimensionMismatch {
            expected: d.edge_count(),
            found: edge_weights.len(),
        });
    }
    let df = d.to_f64();
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(edge_weights));
    Ok(&df * w * df.transpose())
}

/// Node-weighted edge Laplacian `Dᵀ·diag(w)·D`; positive definite for
/// strictly positive weights.
pub fn node_weighted_edge_laplacian(
    d: &IncidenceMatrix,
    node_weights: &[f64],
) -> Result<DMatrix<f64>, GraphError> {
    if node_weights.len() != d.node_count() {
        return Err(GraphError::DimensionMismatch {
            expected: d.node_count(),
            found: node_weights.len(),
        });
    }
    if let Some((index, &value)) = node_weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(GraphError::NonPositiveWeight { index, value });
    }
    let df = d.to_f64();
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(node_weights));
    Ok(df.transpose() * w * df)
}
