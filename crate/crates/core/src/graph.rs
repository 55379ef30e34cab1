//! Directed heterogeneous multigraphs.
//!
//! Vertices carry one categorical label, edges carry a non-empty set of
//! labels. Parallel raw edges between the same ordered pair are merged into a
//! single edge record whose label set is the union. Vertices are stored sorted
//! by id and edges sorted by `(source, target)`, so two graphs built from the
//! same input are identical down to their incidence columns.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

pub type VertexId = u64;
pub type Label = u32;

/// Sorted, duplicate-free set of edge labels.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LabelSet(Vec<Label>);

impl LabelSet {
    pub fn new(labels: impl IntoIterator<Item = Label>) -> Self {
        let mut v: Vec<Label> = labels.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn singleton(label: Label) -> Self {
        Self(vec![label])
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: Label) -> bool {
        self.0.binary_search(&label).is_ok()
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        LabelSet::new(self.0.iter().chain(&other.0).copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.0.iter().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub id: VertexId,
    pub label: Label,
}

/// A merged edge record. `source` and `target` are vertex indices (positions
/// in [`Graph::vertices`]), not ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub labels: LabelSet,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.source == self.target
    }
}

/// A raw edge as supplied by callers, addressed by vertex id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawEdge {
    pub source: VertexId,
    pub target: VertexId,
    pub labels: Vec<Label>,
}

impl RawEdge {
    pub fn new(source: VertexId, target: VertexId, labels: impl Into<Vec<Label>>) -> Self {
        Self {
            source,
            target,
            labels: labels.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct Graph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    n_vertex_labels: u32,
    n_edge_labels: u32,
    reversed: bool,
    // (neighbor, edge index), sorted by neighbor
    out_adj: Vec<Vec<(usize, usize)>>,
    in_adj: Vec<Vec<(usize, usize)>>,
}

/// Builds a validated graph, merging parallel raw edges.
pub fn build_graph(
    n_vertex_labels: u32,
    n_edge_labels: u32,
    vertices: &[(VertexId, Label)],
    raw_edges: &[RawEdge],
) -> Result<Graph> {
    Graph::new(n_vertex_labels, n_edge_labels, vertices, raw_edges)
}

impl Graph {
    pub fn new(
        n_vertex_labels: u32,
        n_edge_labels: u32,
        vertices: &[(VertexId, Label)],
        raw_edges: &[RawEdge],
    ) -> Result<Self> {
        Self::assemble(n_vertex_labels, n_edge_labels, vertices, raw_edges, false)
    }

    fn assemble(
        n_vertex_labels: u32,
        n_edge_labels: u32,
        vertices: &[(VertexId, Label)],
        raw_edges: &[RawEdge],
        reversed: bool,
    ) -> Result<Self> {
        let mut verts: Vec<Vertex> = vertices
            .iter()
            .map(|&(id, label)| Vertex { id, label })
            .collect();
        verts.sort_by_key(|v| v.id);
        for pair in verts.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateVertex(pair[0].id));
            }
        }
        for v in &verts {
            if v.label >= n_vertex_labels {
                return Err(Error::LabelOutOfRange {
                    kind: "vertex",
                    label: v.label,
                    limit: n_vertex_labels,
                });
            }
        }
        let index_of = |id: VertexId| verts.binary_search_by_key(&id, |v| v.id).ok();

        let mut merged: Vec<(usize, usize, LabelSet)> = Vec::with_capacity(raw_edges.len());
        for raw in raw_edges {
            let (Some(s), Some(t)) = (index_of(raw.source), index_of(raw.target)) else {
                return Err(Error::DanglingEndpoint {
                    from: raw.source,
                    to: raw.target,
                });
            };
            if raw.labels.is_empty() {
                return Err(Error::EmptyLabelSet {
                    from: raw.source,
                    to: raw.target,
                });
            }
            if let Some(&bad) = raw.labels.iter().find(|&&l| l >= n_edge_labels) {
                return Err(Error::LabelOutOfRange {
                    kind: "edge",
                    label: bad,
                    limit: n_edge_labels,
                });
            }
            merged.push((s, t, LabelSet::new(raw.labels.iter().copied())));
        }
        merged.sort_by_key(|a| (a.0, a.1));
        let mut edges: Vec<Edge> = Vec::with_capacity(merged.len());
        for (s, t, labels) in merged {
            match edges.last_mut() {
                Some(last) if last.source == s && last.target == t => {
                    last.labels = last.labels.union(&labels);
                }
                _ => edges.push(Edge {
                    source: s,
                    target: t,
                    labels,
                }),
            }
        }

        let n = verts.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            out_adj[e.source].push((e.target, i));
            in_adj[e.target].push((e.source, i));
        }
        for list in in_adj.iter_mut() {
            list.sort_unstable();
        }
        Ok(Self {
            vertices: verts,
            edges,
            n_vertex_labels,
            n_edge_labels,
            reversed,
            out_adj,
            in_adj,
        })
    }

    /// Convenience constructor for graphs whose vertex ids are `0..labels.len()`.
    pub fn from_parts(
        n_vertex_labels: u32,
        n_edge_labels: u32,
        vertex_labels: &[Label],
        edges: &[(VertexId, VertexId, &[Label])],
    ) -> Result<Self> {
        let vertices: Vec<(VertexId, Label)> = vertex_labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as VertexId, l))
            .collect();
        let raw: Vec<RawEdge> = edges
            .iter()
            .map(|&(s, t, ls)| RawEdge::new(s, t, ls.to_vec()))
            .collect();
        Self::new(n_vertex_labels, n_edge_labels, &vertices, &raw)
    }

    /// Undirected simple graph on `0..n` with one vertex and one edge label,
    /// stored with both directions of every edge.
    pub fn symmetric(n: usize, undirected_edges: &[(usize, usize)]) -> Result<Self> {
        let vertices: Vec<(VertexId, Label)> = (0..n as VertexId).map(|i| (i, 0)).collect();
        let mut raw = Vec::with_capacity(2 * undirected_edges.len());
        for &(u, v) in undirected_edges {
            raw.push(RawEdge::new(u as VertexId, v as VertexId, vec![0]));
            raw.push(RawEdge::new(v as VertexId, u as VertexId, vec![0]));
        }
        Self::new(1, 1, &vertices, &raw)
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_vertex_labels(&self) -> u32 {
        self.n_vertex_labels
    }

    pub fn n_edge_labels(&self) -> u32 {
        self.n_edge_labels
    }

    pub fn vertex_label(&self, v: usize) -> Label {
        self.vertices[v].label
    }

    pub fn vertex_index(&self, id: VertexId) -> Option<usize> {
        self.vertices.binary_search_by_key(&id, |v| v.id).ok()
    }

    /// Whether [`Graph::add_reversed_edges`] produced this graph.
    pub fn is_reversed_augmented(&self) -> bool {
        self.reversed
    }

    /// Out-neighbors of `v` as `(target, edge index)`, sorted by target.
    pub fn out_edges(&self, v: usize) -> &[(usize, usize)] {
        &self.out_adj[v]
    }

    /// In-neighbors of `v` as `(source, edge index)`, sorted by source.
    pub fn in_edges(&self, v: usize) -> &[(usize, usize)] {
        &self.in_adj[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_adj[v].len()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_adj[v].len()
    }

    /// Index of the edge `u → v`, if any.
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        let list = &self.out_adj[u];
        list.binary_search_by_key(&v, |&(t, _)| t)
            .ok()
            .map(|pos| list[pos].1)
    }

    pub fn edge_labels(&self, u: usize, v: usize) -> Option<&LabelSet> {
        self.edge_index(u, v).map(|e| &self.edges[e].labels)
    }

    /// Every non-loop edge has its opposite-direction partner.
    pub fn has_reversed_edges(&self) -> bool {
        self.edges
            .iter()
            .all(|e| e.is_self_loop() || self.edge_index(e.target, e.source).is_some())
    }

    /// Adds, for every non-loop edge `(u, v, S)`, the edge `(v, u, S + n_edge_labels)`.
    /// Self-loops are their own reverse. The edge-label space doubles.
    pub fn add_reversed_edges(&self) -> Result<Self> {
        if self.reversed {
            return Err(Error::AlreadyReversed);
        }
        let offset = self.n_edge_labels;
        let mut raw = self.raw_edges();
        for e in self.edges.iter().filter(|e| !e.is_self_loop()) {
            raw.push(RawEdge::new(
                self.vertices[e.target].id,
                self.vertices[e.source].id,
                e.labels.iter().map(|l| l + offset).collect::<Vec<_>>(),
            ));
        }
        Self::assemble(
            self.n_vertex_labels,
            self.n_edge_labels * 2,
            &self.vertex_pairs(),
            &raw,
            true,
        )
    }

    pub fn vertex_pairs(&self) -> Vec<(VertexId, Label)> {
        self.vertices.iter().map(|v| (v.id, v.label)).collect()
    }

    pub fn raw_edges(&self) -> Vec<RawEdge> {
        self.edges
            .iter()
            .map(|e| {
                RawEdge::new(
                    self.vertices[e.source].id,
                    self.vertices[e.target].id,
                    e.labels.as_slice().to_vec(),
                )
            })
            .collect()
    }

    /// Copy of the graph with vertex `i` renamed to `new_ids[i]`.
    pub fn relabel_ids(&self, new_ids: &[VertexId]) -> Result<Self> {
        if new_ids.len() != self.n() {
            return Err(Error::Precondition(format!(
                "expected {} ids, got {}",
                self.n(),
                new_ids.len()
            )));
        }
        let vertices: Vec<(VertexId, Label)> = self
            .vertices
            .iter()
            .zip(new_ids)
            .map(|(v, &id)| (id, v.label))
            .collect();
        let raw: Vec<RawEdge> = self
            .edges
            .iter()
            .map(|e| {
                RawEdge::new(
                    new_ids[e.source],
                    new_ids[e.target],
                    e.labels.as_slice().to_vec(),
                )
            })
            .collect();
        Self::assemble(
            self.n_vertex_labels,
            self.n_edge_labels,
            &vertices,
            &raw,
            self.reversed,
        )
    }

    /// Connectivity of the underlying undirected graph. The empty graph and
    /// single vertices count as connected.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            let neighbors = self.out_adj[v].iter().chain(&self.in_adj[v]);
            for &(w, _) in neighbors {
                if !seen[w] {
                    seen[w] = true;
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        reached == n
    }

    /// Adjacency `A` (one per merged edge record), out- and in-degree
    /// diagonals, and the Laplacian `L = D_out - A`.
    pub fn structural_matrices(&self) -> StructuralMatrices {
        let n = self.n();
        let adjacency = SparseMatrix::from_triplets(
            n,
            n,
            self.edges.iter().map(|e| (e.source, e.target, 1i64)),
        )
        .expect("edge endpoints are valid indices");
        let out_deg: Vec<i64> = (0..n).map(|v| self.out_degree(v) as i64).collect();
        let in_deg: Vec<i64> = (0..n).map(|v| self.in_degree(v) as i64).collect();
        let degree_out = SparseMatrix::from_diagonal(&out_deg);
        let degree_in = SparseMatrix::from_diagonal(&in_deg);
        let laplacian = degree_out
            .sub(&adjacency)
            .expect("square matrices of equal size");
        StructuralMatrices {
            adjacency,
            degree_out,
            degree_in,
            laplacian,
        }
    }

    /// Oriented (`-1` at source, `+1` at target) and unoriented incidence
    /// matrices, `n × m`. A self-loop has a zero oriented column and a `2` at
    /// its vertex in the unoriented one, so every unoriented column sums to 2.
    pub fn incidence_matrices(&self) -> IncidenceMatrices {
        let (n, m) = (self.n(), self.m());
        let mut oriented = Vec::with_capacity(2 * m);
        let mut unoriented = Vec::with_capacity(2 * m);
        for (i, e) in self.edges.iter().enumerate() {
            oriented.push((e.source, i, -1i64));
            oriented.push((e.target, i, 1i64));
            unoriented.push((e.source, i, 1i64));
            unoriented.push((e.target, i, 1i64));
        }
        IncidenceMatrices {
            oriented: SparseMatrix::from_triplets(n, m, oriented).expect("valid indices"),
            unoriented: SparseMatrix::from_triplets(n, m, unoriented).expect("valid indices"),
        }
    }

    /// Upper bounds used to scale filter initialization:
    /// `max(d⁺_u + d⁺_v)` over edges for the graph and `max(d⁻_u + d⁺_v)`
    /// for its line graph. Edgeless graphs give `(1, 1)`.
    pub fn lambda_max_bounds(&self) -> (f64, f64) {
        if self.edges.is_empty() {
            return (1.0, 1.0);
        }
        let mut lambda_g = 0usize;
        let mut lambda_h = 0usize;
        for e in &self.edges {
            lambda_g = lambda_g.max(self.out_degree(e.source) + self.out_degree(e.target));
            lambda_h = lambda_h.max(self.in_degree(e.source) + self.out_degree(e.target));
        }
        (lambda_g.max(1) as f64, lambda_h.max(1) as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph records always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuralMatrices {
    pub adjacency: SparseMatrix<i64>,
    pub degree_out: SparseMatrix<i64>,
    pub degree_in: SparseMatrix<i64>,
    pub laplacian: SparseMatrix<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceMatrices {
    pub oriented: SparseMatrix<i64>,
    pub unoriented: SparseMatrix<i64>,
}

/// On-disk form of a graph: one JSON object per line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphRecord {
    pub n_vertex_labels: u32,
    pub n_edge_labels: u32,
    pub vertices: Vec<(VertexId, Label)>,
    pub edges: Vec<(VertexId, VertexId, Vec<Label>)>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reversed_edges: bool,
}

impl TryFrom<GraphRecord> for Graph {
    type Error = Error;

    fn try_from(rec: GraphRecord) -> Result<Self> {
        let raw: Vec<RawEdge> = rec
            .edges
            .into_iter()
            .map(|(s, t, ls)| RawEdge::new(s, t, ls))
            .collect();
        Graph::assemble(
            rec.n_vertex_labels,
            rec.n_edge_labels,
            &rec.vertices,
            &raw,
            rec.reversed_edges,
        )
    }
}

impl From<Graph> for GraphRecord {
    fn from(g: Graph) -> Self {
        GraphRecord {
            n_vertex_labels: g.n_vertex_labels,
            n_edge_labels: g.n_edge_labels,
            vertices: g.vertex_pairs(),
            edges: g
                .raw_edges()
                .into_iter()
                .map(|e| (e.source, e.target, e.labels))
                .collect(),
            reversed_edges: g.reversed,
        }
    }
}
