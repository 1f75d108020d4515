//! Network topology: validated simple graphs, incidence matrices, surviving
//! subgraph connectivity and demand-driven edge orientation.
//!
//! Nodes and edges are 1-indexed throughout the public API. An edge's label is
//! its position in the input list; tie-breaking rules order edges by it.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed edge `tail -> head`, 1-indexed nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

impl Edge {
    pub fn new(tail: usize, head: usize) -> Self {
        Self { tail, head }
    }

    pub fn reversed(self) -> Self {
        Self { tail: self.head, head: self.tail }
    }

    pub fn touches(&self, node: usize) -> bool {
        self.tail == node || self.head == node
    }
}

/// A simple directed graph. Orientation only fixes flow sign conventions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<Edge>,
}

/// On-disk form: `{"nodes": n, "edges": [[tail, head], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
}

/// Assignment of nodes to connected components, ids contiguous from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPartition {
    /// `assignment[i]` is the component id of node `i + 1`.
    pub assignment: Vec<usize>,
    pub component_count: usize,
}

impl ComponentPartition {
    pub fn component_of(&self, node: usize) -> usize {
        self.assignment[node - 1]
    }

    /// Nodes (1-indexed) of every component, ordered by component id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.component_count];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c - 1].push(i + 1);
        }
        out
    }

    /// Canonical form: components as sorted node sets, sorted. Independent of
    /// how ids were assigned.
    pub fn canonical(&self) -> BTreeSet<BTreeSet<usize>> {
        self.members().into_iter().map(|c| c.into_iter().collect()).collect()
    }
}

pub fn build_graph(node_count: usize, edges: &[(usize, usize)]) -> Result<Graph> {
    if node_count == 0 {
        return Err(Error::MalformedGraph { reason: "graph has no nodes".into(), edge: None });
    }
    if edges.is_empty() {
        return Err(Error::MalformedGraph { reason: "edge list is empty".into(), edge: None });
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(edges.len());
    for &(tail, head) in edges {
        let bad = |reason: &str| Error::MalformedGraph { reason: reason.into(), edge: Some((tail, head)) };
        if tail == 0 || head == 0 || tail > node_count || head > node_count {
            return Err(bad("node index out of range"));
        }
        if tail == head {
            return Err(bad("self-loop"));
        }
        let key = (tail.min(head), tail.max(head));
        if !seen.insert(key) {
            return Err(bad("duplicate edge"));
        }
        out.push(Edge::new(tail, head));
    }
    Ok(Graph { node_count, edges: out })
}

impl Graph {
    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        build_graph(file.nodes, &edges)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            nodes: self.node_count,
            edges: self.edges.iter().map(|e| [e.tail, e.head]).collect(),
        }
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

    /// Edge with 1-based label `id`.
    pub fn edge(&self, id: usize) -> Result<Edge> {
        if id == 0 || id > self.edges.len() {
            return Err(Error::InvalidEdge(id));
        }
        Ok(self.edges[id - 1])
    }

    /// Labels of edges adjacent to `node`.
    pub fn adjacent_edges(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.touches(node))
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn all_edges_mask(&self) -> Vec<bool> {
        vec![true; self.edges.len()]
    }

    pub fn is_connected(&self) -> bool {
        connected_components(self, &self.all_edges_mask()).component_count == 1
    }

    /// Fails with `Disconnected` unless every node is reachable.
    pub fn require_connected(&self) -> Result<()> {
        let parts = connected_components(self, &self.all_edges_mask());
        if parts.component_count != 1 {
            return Err(Error::Disconnected { components: parts.component_count });
        }
        Ok(())
    }

    /// Reverse the listed edges (1-based labels).
    pub fn with_flipped(&self, flips: &[usize]) -> Graph {
        let mut g = self.clone();
        for &id in flips {
            g.edges[id - 1] = g.edges[id - 1].reversed();
        }
        g
    }

    /// Relabel nodes so that `max_node` becomes node 1 and the others keep
    /// their relative order, mirroring the max-first reordering of a demand
    /// vector. Edge labels and orientations are preserved.
    pub fn relabel_max_first(&self, max_node: usize) -> Graph {
        let map = |v: usize| {
            if v == max_node {
                1
            } else if v < max_node {
                v + 1
            } else {
                v
            }
        };
        Graph {
            node_count: self.node_count,
            edges: self.edges.iter().map(|e| Edge::new(map(e.tail), map(e.head))).collect(),
        }
    }
}

/// `m x n` incidence matrix: row `e` has `+1` at the head, `-1` at the tail.
pub fn incidence_matrix(g: &Graph) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(g.edge_count(), g.node_count());
    for (e, edge) in g.edges.iter().enumerate() {
        c[(e, edge.head - 1)] = 1.0;
        c[(e, edge.tail - 1)] = -1.0;
    }
    c
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Undirected connectivity over the edges flagged in `surviving`
/// (`surviving[e - 1]` for edge label `e`). Ids follow first appearance in
/// node order.
pub fn connected_components(g: &Graph, surviving: &[bool]) -> ComponentPartition {
    let n = g.node_count();
    let mut uf = UnionFind::new(n);
    for (e, edge) in g.edges.iter().enumerate() {
        if surviving.get(e).copied().unwrap_or(false) {
            uf.union(edge.tail - 1, edge.head - 1);
        }
    }
    let mut ids = vec![0usize; n];
    let mut root_id = vec![0usize; n];
    let mut count = 0;
    for (v, id) in ids.iter_mut().enumerate() {
        let r = uf.find(v);
        if root_id[r] == 0 {
            count += 1;
            root_id[r] = count;
        }
        *id = root_id[r];
    }
    ComponentPartition { assignment: ids, component_count: count }
}

/// Per-edge flow signs used to normalize orientation: `unit[e]` is
/// `(V e_1)_e` and `demand[e]` is `(V d)_e` for the working demand.
#[derive(Debug, Clone)]
pub struct FlowSigns {
    pub unit: Vec<f64>,
    pub demand: Vec<f64>,
}

/// Level, relative to the largest demand flow, below which a flow component
/// counts as zero when deciding orientation.
pub const ORIENTATION_ZERO_TOL: f64 = 1e-12;

/// Labels of the edges that must be reversed so the working demand flows
/// along every edge orientation. The demand sign decides; when it is zero the
/// sign of the unit-demand flow decides.
pub fn edges_to_flip(signs: &FlowSigns) -> Vec<usize> {
    // matches the relative snapping of planning flows to zero capacity
    let scale = signs.demand.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let tol = ORIENTATION_ZERO_TOL * scale;
    signs
        .demand
        .iter()
        .zip(&signs.unit)
        .enumerate()
        .filter(|(_, (&vd, &ve))| vd < -tol || (vd.abs() <= tol && ve < -ORIENTATION_ZERO_TOL))
        .map(|(i, _)| i + 1)
        .collect()
}

pub fn orient_for_demand(g: &Graph, signs: &FlowSigns) -> Graph {
    g.with_flipped(&edges_to_flip(signs))
}
