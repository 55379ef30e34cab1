//! Exact isomorphism and edge-induced subgraph-isomorphism search.
//!
//! A backtracking matcher in the VF2 family: pattern vertices are placed in a
//! connectivity-first order, graph candidates are drawn from the neighborhood
//! of an already-mapped vertex when possible, and pruned by label, degree and
//! exact edge-label-set equality. Matches are reported as vectors indexed by
//! pattern vertex index.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet};
use crate::line_graph::LineGraphResult;

/// Pattern vertex index → graph vertex index.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Isomorphism {
    pub mapping: Vec<usize>,
}

impl Isomorphism {
    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }
}

/// Subgraph-isomorphism count plus per-vertex and per-edge occurrence counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchStats {
    pub count: u64,
    pub node_freq: Vec<u64>,
    pub edge_freq: Vec<u64>,
}

impl MatchStats {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            count: 0,
            node_freq: vec![0; n],
            edge_freq: vec![0; m],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Exact,
    Subgraph,
}

struct Constraint {
    placed: usize,
    // pattern edge new → placed, placed → new
    forward: Option<LabelSet>,
    backward: Option<LabelSet>,
}

struct Step {
    vertex: usize,
    self_loop: Option<LabelSet>,
    constraints: Vec<Constraint>,
}

struct Matcher<'a> {
    pattern: &'a Graph,
    graph: &'a Graph,
    mode: Mode,
    steps: Vec<Step>,
    rank: Vec<usize>,
    global_candidates: Vec<usize>,
    deadline: Option<Instant>,
    ticks: u64,
}

impl<'a> Matcher<'a> {
    fn new(pattern: &'a Graph, graph: &'a Graph, mode: Mode, deadline: Option<Instant>) -> Self {
        let steps = plan(pattern);
        // candidate order: (label, degree descending, id)
        let mut global_candidates: Vec<usize> = (0..graph.n()).collect();
        global_candidates.sort_by_key(|&v| {
            (
                graph.vertex_label(v),
                std::cmp::Reverse(graph.out_degree(v) + graph.in_degree(v)),
                graph.vertices()[v].id,
            )
        });
        let mut rank = vec![0; graph.n()];
        for (r, &v) in global_candidates.iter().enumerate() {
            rank[v] = r;
        }
        Self {
            pattern,
            graph,
            mode,
            steps,
            rank,
            global_candidates,
            deadline,
            ticks: 0,
        }
    }

    fn degrees_fit(&self, p: usize, g: usize) -> bool {
        let (po, pi) = (self.pattern.out_degree(p), self.pattern.in_degree(p));
        let (go, gi) = (self.graph.out_degree(g), self.graph.in_degree(g));
        match self.mode {
            Mode::Exact => po == go && pi == gi,
            Mode::Subgraph => po <= go && pi <= gi,
        }
    }

    fn labels_fit(&self, want: &Option<LabelSet>, have: Option<&LabelSet>) -> bool {
        match (want, have) {
            (Some(w), Some(h)) => w == h,
            (Some(_), None) => false,
            (None, Some(_)) => self.mode == Mode::Subgraph,
            (None, None) => true,
        }
    }

    fn feasible(&self, step: &Step, candidate: usize, mapping: &[usize]) -> bool {
        if self.graph.vertex_label(candidate) != self.pattern.vertex_label(step.vertex) {
            return false;
        }
        if !self.degrees_fit(step.vertex, candidate) {
            return false;
        }
        if !self.labels_fit(
            &step.self_loop,
            self.graph.edge_labels(candidate, candidate),
        ) {
            return false;
        }
        step.constraints.iter().all(|c| {
            let other = mapping[c.placed];
            self.labels_fit(&c.forward, self.graph.edge_labels(candidate, other))
                && self.labels_fit(&c.backward, self.graph.edge_labels(other, candidate))
        })
    }

    fn candidates(&self, step: &Step, mapping: &[usize]) -> Vec<usize> {
        // Prefer the neighborhood of an already-mapped pattern neighbor.
        for c in &step.constraints {
            let anchor = mapping[c.placed];
            let pool: Option<Vec<usize>> = if c.backward.is_some() {
                Some(
                    self.graph
                        .out_edges(anchor)
                        .iter()
                        .map(|&(t, _)| t)
                        .collect(),
                )
            } else if c.forward.is_some() {
                Some(
                    self.graph
                        .in_edges(anchor)
                        .iter()
                        .map(|&(s, _)| s)
                        .collect(),
                )
            } else {
                None
            };
            if let Some(mut pool) = pool {
                pool.sort_by_key(|&v| self.rank[v]);
                return pool;
            }
        }
        self.global_candidates.clone()
    }

    fn run(&mut self, visit: &mut dyn FnMut(&[usize])) -> Result<()> {
        let n = self.pattern.n();
        let mut mapping = vec![usize::MAX; n];
        let mut used = vec![false; self.graph.n()];
        self.extend(0, &mut mapping, &mut used, visit)
    }

    fn extend(
        &mut self,
        depth: usize,
        mapping: &mut Vec<usize>,
        used: &mut Vec<bool>,
        visit: &mut dyn FnMut(&[usize]),
    ) -> Result<()> {
        if depth == self.steps.len() {
            visit(mapping);
            return Ok(());
        }
        self.ticks += 1;
        if self.ticks.is_multiple_of(1024) {
            if let Some(deadline) = self.deadline {
                if Instant::now() > deadline {
                    return Err(Error::Timeout);
                }
            }
        }
        let candidates = self.candidates(&self.steps[depth], mapping);
        for candidate in candidates {
            if used[candidate] || !self.feasible(&self.steps[depth], candidate, mapping) {
                continue;
            }
            let p = self.steps[depth].vertex;
            mapping[p] = candidate;
            used[candidate] = true;
            self.extend(depth + 1, mapping, used, visit)?;
            used[candidate] = false;
            mapping[p] = usize::MAX;
        }
        Ok(())
    }
}

/// Placement order: start at the highest-degree vertex, then repeatedly take
/// the vertex with the most links into the placed set.
fn plan(pattern: &Graph) -> Vec<Step> {
    let n = pattern.n();
    let degree = |v: usize| pattern.out_degree(v) + pattern.in_degree(v);
    let mut placed = vec![false; n];
    let mut links = vec![0usize; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let next = (0..n)
            .filter(|&v| !placed[v])
            .max_by_key(|&v| (links[v], degree(v), std::cmp::Reverse(v)))
            .expect("an unplaced vertex remains");
        placed[next] = true;
        order.push(next);
        for &(w, _) in pattern.out_edges(next).iter().chain(pattern.in_edges(next)) {
            links[w] += 1;
        }
    }
    let mut position = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    order
        .iter()
        .enumerate()
        .map(|(i, &v)| Step {
            vertex: v,
            self_loop: pattern.edge_labels(v, v).cloned(),
            constraints: order[..i]
                .iter()
                .map(|&q| Constraint {
                    placed: q,
                    forward: pattern.edge_labels(v, q).cloned(),
                    backward: pattern.edge_labels(q, v).cloned(),
                })
                .collect(),
        })
        .map(|mut s| {
            // Constraints without edges only matter in exact mode; keep
            // anchored ones first so candidate pools come from neighborhoods.
            s.constraints.sort_by_key(|c| {
                (
                    c.forward.is_none() && c.backward.is_none(),
                    position[c.placed],
                )
            });
            s
        })
        .collect()
}

fn quick_reject_exact(g1: &Graph, g2: &Graph) -> bool {
    if g1.n() != g2.n() || g1.m() != g2.m() {
        return true;
    }
    let mut a: Vec<_> = g1.vertices().iter().map(|v| v.label).collect();
    let mut b: Vec<_> = g2.vertices().iter().map(|v| v.label).collect();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return true;
    }
    let mut ea: Vec<&LabelSet> = g1.edges().iter().map(|e| &e.labels).collect();
    let mut eb: Vec<&LabelSet> = g2.edges().iter().map(|e| &e.labels).collect();
    ea.sort();
    eb.sort();
    ea != eb
}

/// Calls `visit` for every isomorphism `g1 → g2`; returns early with
/// [`Error::Timeout`] past `deadline`.
pub fn for_each_isomorphism(
    g1: &Graph,
    g2: &Graph,
    deadline: Option<Instant>,
    visit: &mut dyn FnMut(&[usize]),
) -> Result<()> {
    if quick_reject_exact(g1, g2) {
        return Ok(());
    }
    Matcher::new(g1, g2, Mode::Exact, deadline).run(visit)
}

/// Calls `visit` for every subgraph isomorphism of `pattern` into `graph`.
pub fn for_each_subgraph_isomorphism(
    pattern: &Graph,
    graph: &Graph,
    deadline: Option<Instant>,
    visit: &mut dyn FnMut(&[usize]),
) -> Result<()> {
    if pattern.n() > graph.n() || pattern.m() > graph.m() {
        return Ok(());
    }
    Matcher::new(pattern, graph, Mode::Subgraph, deadline).run(visit)
}

/// All isomorphisms `g1 → g2`; two empty graphs have exactly the empty map.
pub fn enumerate_isomorphisms(g1: &Graph, g2: &Graph) -> Vec<Isomorphism> {
    let mut out = Vec::new();
    for_each_isomorphism(g1, g2, None, &mut |m| {
        out.push(Isomorphism {
            mapping: m.to_vec(),
        })
    })
    .expect("no deadline");
    out
}

pub fn count_isomorphisms(g1: &Graph, g2: &Graph) -> u64 {
    let mut count = 0;
    for_each_isomorphism(g1, g2, None, &mut |_| count += 1).expect("no deadline");
    count
}

pub fn enumerate_subgraph_isomorphisms(pattern: &Graph, graph: &Graph) -> Vec<Isomorphism> {
    let mut out = Vec::new();
    for_each_subgraph_isomorphism(pattern, graph, None, &mut |m| {
        out.push(Isomorphism {
            mapping: m.to_vec(),
        })
    })
    .expect("no deadline");
    out
}

pub fn count_subgraph_isomorphisms(pattern: &Graph, graph: &Graph) -> u64 {
    let mut count = 0;
    for_each_subgraph_isomorphism(pattern, graph, None, &mut |_| count += 1).expect("no deadline");
    count
}

pub fn match_stats(pattern: &Graph, graph: &Graph) -> MatchStats {
    match_stats_with_deadline(pattern, graph, None).expect("no deadline")
}

pub fn match_stats_with_deadline(
    pattern: &Graph,
    graph: &Graph,
    deadline: Option<Instant>,
) -> Result<MatchStats> {
    let mut stats = MatchStats::zeros(graph.n(), graph.m());
    let pattern_edges: Vec<(usize, usize)> = pattern
        .edges()
        .iter()
        .map(|e| (e.source, e.target))
        .collect();
    for_each_subgraph_isomorphism(pattern, graph, deadline, &mut |mapping| {
        stats.count += 1;
        for &v in mapping {
            stats.node_freq[v] += 1;
        }
        for &(s, t) in &pattern_edges {
            let e = graph
                .edge_index(mapping[s], mapping[t])
                .expect("matched pattern edges exist in the graph");
            stats.edge_freq[e] += 1;
        }
    })?;
    Ok(stats)
}

/// Checks every clause of the isomorphism definition for `f: g1 → g2`.
pub fn validate_isomorphism(f: &Isomorphism, g1: &Graph, g2: &Graph) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidIsomorphism(msg));
    if f.mapping.len() != g1.n() || g1.n() != g2.n() {
        return bad(format!(
            "mapping covers {} of {} vertices onto {}",
            f.mapping.len(),
            g1.n(),
            g2.n()
        ));
    }
    let mut hit = vec![false; g2.n()];
    for &t in &f.mapping {
        if t >= g2.n() || hit[t] {
            return bad(format!("not a bijection at image {t}"));
        }
        hit[t] = true;
    }
    for (v, &t) in f.mapping.iter().enumerate() {
        if g1.vertex_label(v) != g2.vertex_label(t) {
            return bad(format!("vertex {v} label differs from image {t}"));
        }
    }
    for e in g1.edges() {
        let image = g2.edge_labels(f.mapping[e.source], f.mapping[e.target]);
        if image != Some(&e.labels) {
            return bad(format!("edge ({}, {}) not preserved", e.source, e.target));
        }
    }
    let mut inverse = vec![0; g2.n()];
    for (v, &t) in f.mapping.iter().enumerate() {
        inverse[t] = v;
    }
    for e in g2.edges() {
        let pre = g1.edge_labels(inverse[e.source], inverse[e.target]);
        if pre != Some(&e.labels) {
            return bad(format!("edge ({}, {}) has no preimage", e.source, e.target));
        }
    }
    Ok(())
}

/// The line-graph isomorphism induced by `f`:
/// `f'(g₁(u, v)) = g₂(f(u), f(v))`.
pub fn dual_isomorphism(
    f: &Isomorphism,
    g1: &Graph,
    g2: &Graph,
    lg1: &LineGraphResult,
    lg2: &LineGraphResult,
) -> Result<Isomorphism> {
    validate_isomorphism(f, g1, g2)?;
    let mut mapping = vec![0; lg1.line_graph.n()];
    for (v, slot) in mapping.iter_mut().enumerate() {
        let e = &g1.edges()[lg1.vertex_to_edge[v]];
        let image = g2
            .edge_index(f.mapping[e.source], f.mapping[e.target])
            .ok_or_else(|| Error::InvalidIsomorphism("edge image missing".into()))?;
        *slot = lg2.edge_to_vertex[image];
    }
    Ok(Isomorphism { mapping })
}

/// Outcome of comparing isomorphism counts of two graphs and of their
/// line graphs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DualityReport {
    pub isomorphisms: usize,
    pub line_isomorphisms: usize,
    pub counts_equal: bool,
    /// Every dual map is a valid line-graph isomorphism and no two
    /// isomorphisms share a dual.
    pub dual_injective: bool,
}

impl DualityReport {
    pub fn holds(&self) -> bool {
        self.counts_equal && self.dual_injective
    }
}

pub fn verify_duality(g1: &Graph, g2: &Graph) -> Result<DualityReport> {
    for (name, g) in [("first", g1), ("second", g2)] {
        if !g.is_connected() {
            return Err(Error::Precondition(format!(
                "{name} graph is not connected"
            )));
        }
        if !g.has_reversed_edges() {
            return Err(Error::Precondition(format!(
                "{name} graph lacks reversed edges"
            )));
        }
    }
    let lg1 = crate::line_graph::line_graph(g1)?;
    let lg2 = crate::line_graph::line_graph(g2)?;
    let forward = enumerate_isomorphisms(g1, g2);
    let line = enumerate_isomorphisms(&lg1.line_graph, &lg2.line_graph);
    let mut duals = Vec::with_capacity(forward.len());
    let mut valid = true;
    for f in &forward {
        let d = dual_isomorphism(f, g1, g2, &lg1, &lg2)?;
        valid &= validate_isomorphism(&d, &lg1.line_graph, &lg2.line_graph).is_ok();
        duals.push(d);
    }
    duals.sort();
    let distinct = duals.windows(2).all(|w| w[0] != w[1]);
    Ok(DualityReport {
        isomorphisms: forward.len(),
        line_isomorphisms: line.len(),
        counts_equal: forward.len() == line.len(),
        dual_injective: valid && distinct,
    })
}
