//! Edge-to-vertex transform.
//!
//! Every edge `e` of the source graph becomes a line-graph vertex whose label
//! encodes `e`'s label set, and `g(d) → g(e)` is a line-graph edge whenever
//! `d.target == e.source`, labeled with that shared vertex's label.

use crate::error::{Error, Result};
use crate::graph::{Graph, Label, LabelSet, RawEdge, VertexId};
use crate::linalg::SparseMatrix;

/// Largest edge-label space whose label sets can be encoded as line-graph
/// vertex labels (bitmasks in a `u32`).
pub const MAX_LINE_EDGE_LABELS: u32 = 31;

#[derive(Clone, Debug, PartialEq)]
pub struct LineGraphResult {
    pub line_graph: Graph,
    /// Source edge index → line-graph vertex index.
    pub edge_to_vertex: Vec<usize>,
    /// Line-graph vertex index → source edge index.
    pub vertex_to_edge: Vec<usize>,
}

/// Bitmask encoding of a label set, used as the line-graph vertex label.
pub fn encode_label_set(labels: &LabelSet) -> Label {
    labels.iter().fold(0, |acc, l| acc | (1 << l))
}

pub fn decode_label_set(code: Label) -> LabelSet {
    LabelSet::new((0..32).filter(|b| code & (1 << b) != 0))
}

pub fn line_graph(g: &Graph) -> Result<LineGraphResult> {
    if g.n_edge_labels() > MAX_LINE_EDGE_LABELS {
        return Err(Error::Guard(format!(
            "line graph label encoding supports at most {MAX_LINE_EDGE_LABELS} edge labels, got {}",
            g.n_edge_labels()
        )));
    }
    let vertices: Vec<(VertexId, Label)> = g
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| (i as VertexId, encode_label_set(&e.labels)))
        .collect();
    let mut raw = Vec::new();
    for v in 0..g.n() {
        let label = g.vertex_label(v);
        for &(_, d) in g.in_edges(v) {
            for &(_, e) in g.out_edges(v) {
                raw.push(RawEdge::new(d as VertexId, e as VertexId, vec![label]));
            }
        }
    }
    let line = Graph::new(1 << g.n_edge_labels(), g.n_vertex_labels(), &vertices, &raw)?;
    let identity: Vec<usize> = (0..g.m()).collect();
    Ok(LineGraphResult {
        line_graph: line,
        edge_to_vertex: identity.clone(),
        vertex_to_edge: identity,
    })
}

/// Out-degree of every line-graph vertex, read off the source graph:
/// for `e = (u, v)` it is `d⁺(v)`.
pub fn line_degree_diagonal(g: &Graph) -> SparseMatrix<i64> {
    let diag: Vec<i64> = g
        .edges()
        .iter()
        .map(|e| g.out_degree(e.target) as i64)
        .collect();
    SparseMatrix::from_diagonal(&diag)
}

/// In-degree of every line-graph vertex: for `e = (u, v)` it is `d⁻(u)`.
pub fn line_in_degrees(g: &Graph) -> Vec<i64> {
    g.edges()
        .iter()
        .map(|e| g.in_degree(e.source) as i64)
        .collect()
}

/// Line-graph adjacency from incidence data alone:
/// `A_H = ¼ (B̂ + B)ᵀ (B̂ − B)`, since `(B̂ + B)/2` marks targets and
/// `(B̂ − B)/2` marks sources.
pub fn line_adjacency_from_incidence(g: &Graph) -> SparseMatrix<i64> {
    let inc = g.incidence_matrices();
    let targets = inc.unoriented.add(&inc.oriented).expect("same shape");
    let sources = inc.unoriented.sub(&inc.oriented).expect("same shape");
    let product = targets
        .transpose()
        .matmul(&sources)
        .expect("n × m incidence shapes chain");
    product.map(|v| v / 4)
}
