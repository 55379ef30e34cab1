//! Synthetic pattern and graph generators, and oracle-labeled datasets.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Label, RawEdge, VertexId};
use crate::iso::{match_stats_with_deadline, MatchStats};

pub const MAX_PATTERN_N: usize = 8;
pub const MAX_GRAPH_N: usize = 64;

/// Labeled (pattern, graph) pair. Serializes flat as
/// `{"pattern", "graph", "count", "node_freq", "edge_freq"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub pattern: Graph,
    pub graph: Graph,
    #[serde(flatten)]
    pub stats: MatchStats,
}

impl DatasetExample {
    pub fn labeled(pattern: Graph, graph: Graph) -> Self {
        let stats = crate::iso::match_stats(&pattern, &graph);
        Self {
            pattern,
            graph,
            stats,
        }
    }

    /// Recomputes the stats with the oracle and compares.
    pub fn revalidate(&self) -> bool {
        crate::iso::match_stats(&self.pattern, &self.graph) == self.stats
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("examples serialize")
    }

    pub fn from_json(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

pub fn examples_to_jsonl(examples: &[DatasetExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&ex.to_json());
        out.push('\n');
    }
    out
}

pub fn examples_from_jsonl(text: &str) -> Result<Vec<DatasetExample>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(DatasetExample::from_json)
        .collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn symmetric_from(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::symmetric(n, edges).expect("generated edges are in range")
}

/// G(n, p) over unordered pairs; every chosen pair is stored in both
/// directions with the single edge label.
pub fn gen_erdos_renyi(n: usize, edge_prob: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Precondition(format!(
            "edge probability {edge_prob} outside [0, 1]"
        )));
    }
    let mut rng = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(edge_prob) {
                edges.push((u, v));
            }
        }
    }
    Ok(symmetric_from(n, &edges))
}

const REGULAR_RESTARTS: usize = 1000;

/// Random simple `degree`-regular graph via the pairing model: points are
/// paired at random, a pairing that would create a loop or a repeated edge
/// is redrawn, and the whole attempt restarts when no valid pair is left.
pub fn gen_regular(n: usize, degree: usize, seed: u64) -> Result<Graph> {
    if !(n * degree).is_multiple_of(2) || (n > 0 && degree >= n) {
        return Err(Error::Infeasible(format!(
            "no simple {degree}-regular graph on {n} vertices"
        )));
    }
    let mut rng = rng(seed);
    'attempt: for _ in 0..REGULAR_RESTARTS {
        let mut points: Vec<usize> = (0..n)
            .flat_map(|v| std::iter::repeat_n(v, degree))
            .collect();
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        while !points.is_empty() {
            let mut placed = false;
            for _ in 0..4 * points.len() {
                let i = rng.gen_range(0..points.len());
                let j = rng.gen_range(0..points.len());
                let (u, v) = (points[i], points[j]);
                let key = (u.min(v), u.max(v));
                if i == j || u == v || edges.contains(&key) {
                    continue;
                }
                edges.insert(key);
                let (hi, lo) = (i.max(j), i.min(j));
                points.swap_remove(hi);
                points.swap_remove(lo);
                placed = true;
                break;
            }
            if !placed {
                continue 'attempt;
            }
        }
        let mut edges: Vec<(usize, usize)> = edges.into_iter().collect();
        edges.sort_unstable();
        return Ok(symmetric_from(n, &edges));
    }
    Err(Error::Infeasible(format!(
        "rejection budget exhausted for {degree}-regular graph on {n} vertices"
    )))
}

/// 3-star, triangle, tailed triangle and chordal cycle, each with reversed
/// edges added.
pub fn gen_standard_patterns() -> Vec<Graph> {
    let shapes: [(usize, &[(usize, usize)]); 4] = [
        (4, &[(0, 1), (0, 2), (0, 3)]),
        (3, &[(0, 1), (1, 2), (2, 0)]),
        (4, &[(0, 1), (1, 2), (2, 0), (0, 3)]),
        (4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]),
    ];
    shapes
        .iter()
        .map(|(n, edges)| {
            symmetric_from(*n, edges)
                .add_reversed_edges()
                .expect("fresh graph")
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeteroConfig {
    pub n: usize,
    /// Raw edges drawn, including the spanning tree; parallel draws merge
    /// into multi-label edges.
    pub m: usize,
    pub n_vertex_labels: u32,
    pub n_edge_labels: u32,
    pub self_loops: bool,
}

/// Random connected heterogeneous multigraph: a random spanning tree with
/// random orientations, then `m - (n - 1)` further raw edges, all labels
/// drawn uniformly.
pub fn gen_hetero(
    n: usize,
    m: usize,
    n_vertex_labels: u32,
    n_edge_labels: u32,
    seed: u64,
) -> Result<Graph> {
    gen_hetero_with(
        HeteroConfig {
            n,
            m,
            n_vertex_labels,
            n_edge_labels,
            self_loops: false,
        },
        seed,
    )
}

pub fn gen_hetero_with(config: HeteroConfig, seed: u64) -> Result<Graph> {
    let HeteroConfig {
        n,
        m,
        n_vertex_labels,
        n_edge_labels,
        self_loops,
    } = config;
    if n_vertex_labels == 0 || n_edge_labels == 0 {
        return Err(Error::Infeasible("label spaces must be non-empty".into()));
    }
    if n > 0 && m < n - 1 {
        return Err(Error::Infeasible(format!(
            "{m} edges cannot connect {n} vertices"
        )));
    }
    if n == 0 && m > 0 || n == 1 && m > 0 && !self_loops {
        return Err(Error::Infeasible(format!(
            "{m} edges do not fit on {n} vertices"
        )));
    }
    let mut rng = rng(seed);
    let vertices: Vec<(VertexId, Label)> = (0..n as VertexId)
        .map(|i| (i, rng.gen_range(0..n_vertex_labels)))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut raw = Vec::with_capacity(m);
    let mut push = |rng: &mut ChaCha8Rng, u: usize, v: usize| {
        let label = rng.gen_range(0..n_edge_labels);
        raw.push(RawEdge::new(u as VertexId, v as VertexId, vec![label]));
    };
    for i in 1..n {
        let (a, b) = (order[i], order[rng.gen_range(0..i)]);
        if rng.gen_bool(0.5) {
            push(&mut rng, a, b);
        } else {
            push(&mut rng, b, a);
        }
    }
    for _ in n.saturating_sub(1)..m {
        let u = rng.gen_range(0..n);
        let v = loop {
            let v = rng.gen_range(0..n);
            if self_loops || v != u {
                break v;
            }
        };
        push(&mut rng, u, v);
    }
    Graph::new(n_vertex_labels, n_edge_labels, &vertices, &raw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Add reversed edges to every pattern and graph not already augmented.
    pub with_reversed: bool,
    /// Per-pair oracle budget; pairs that exceed it are skipped.
    pub timeout_ms: Option<u64>,
    pub max_pattern_n: usize,
    pub max_graph_n: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            with_reversed: true,
            timeout_ms: None,
            max_pattern_n: MAX_PATTERN_N,
            max_graph_n: MAX_GRAPH_N,
        }
    }
}

fn prepare(g: &Graph, with_reversed: bool) -> Result<Graph> {
    if with_reversed && !g.is_reversed_augmented() {
        g.add_reversed_edges()
    } else {
        Ok(g.clone())
    }
}

/// Labels every (pattern, graph) pair with the oracle, pattern-major order.
pub fn build_dataset(
    patterns: &[Graph],
    graphs: &[Graph],
    config: &DatasetConfig,
) -> Result<Vec<DatasetExample>> {
    let pairs: Vec<(Graph, Graph)> = patterns
        .iter()
        .flat_map(|p| graphs.iter().map(move |g| (p.clone(), g.clone())))
        .collect();
    label_pairs(&pairs, config)
}

/// Labels explicit (pattern, graph) pairs, keeping their order. Pairs whose
/// oracle run exceeds the budget are skipped and logged.
pub fn label_pairs(
    pairs: &[(Graph, Graph)],
    config: &DatasetConfig,
) -> Result<Vec<DatasetExample>> {
    for (pattern, graph) in pairs {
        for (g, max_n) in [(pattern, config.max_pattern_n), (graph, config.max_graph_n)] {
            if g.n() > max_n {
                return Err(Error::GraphTooLarge { n: g.n(), max_n });
            }
        }
    }
    let budget = config.timeout_ms.map(Duration::from_millis);
    let labeled: Vec<Option<DatasetExample>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (pattern, graph))| -> Result<Option<DatasetExample>> {
            let pattern = prepare(pattern, config.with_reversed)?;
            let graph = prepare(graph, config.with_reversed)?;
            let deadline = budget.map(|b| Instant::now() + b);
            match match_stats_with_deadline(&pattern, &graph, deadline) {
                Ok(stats) => Ok(Some(DatasetExample {
                    pattern,
                    graph,
                    stats,
                })),
                Err(Error::Timeout) => {
                    log::warn!("skipping pair {i}: oracle exceeded its time budget");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(labeled.into_iter().flatten().collect())
}
