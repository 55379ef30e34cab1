//! Naive reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Mutex;

use dmpnn_core::iso::MatchStats;
use dmpnn_core::{Graph, RawEdge};
use rand::seq::SliceRandom;
use rand::Rng;

/// Serializes timing-sensitive tests within one test binary.
pub static SERIAL: Mutex<()> = Mutex::new(());

pub fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn report(id: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id}: {} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

pub type Dense = Vec<Vec<i64>>;

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0; c]; r]
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(n, m);
    for i in 0..n {
        for p in 0..k {
            for j in 0..m {
                out[i][j] += a[i][p] * b[p][j];
            }
        }
    }
    out
}

pub fn transpose(a: &Dense) -> Dense {
    let (r, c) = (a.len(), a.first().map_or(0, Vec::len));
    let mut out = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            out[j][i] = a[i][j];
        }
    }
    out
}

/// `(source, target)` index pairs of the merged edges, in edge order.
pub fn endpoints(g: &Graph) -> Vec<(usize, usize)> {
    g.edges().iter().map(|e| (e.source, e.target)).collect()
}

/// Oriented incidence: −1 at the source, +1 at the target, zero column for
/// a self-loop.
pub fn oriented_incidence(g: &Graph) -> Dense {
    let mut b = zeros(g.n(), g.m());
    for (j, (s, t)) in endpoints(g).into_iter().enumerate() {
        b[s][j] -= 1;
        b[t][j] += 1;
    }
    b
}

/// Unoriented incidence: +1 at each endpoint, 2 for a self-loop.
pub fn unoriented_incidence(g: &Graph) -> Dense {
    let mut b = zeros(g.n(), g.m());
    for (j, (s, t)) in endpoints(g).into_iter().enumerate() {
        b[s][j] += 1;
        b[t][j] += 1;
    }
    b
}

/// Out-degree Laplacian `D_out − A` with one adjacency unit per merged edge.
pub fn laplacian(g: &Graph) -> Dense {
    let mut l = zeros(g.n(), g.n());
    for (s, t) in endpoints(g) {
        l[s][s] += 1;
        l[s][t] -= 1;
    }
    l
}

/// Line-graph adjacency straight from the definition: `d → e` whenever the
/// target of `d` is the source of `e`.
pub fn line_adjacency(g: &Graph) -> Dense {
    let ends = endpoints(g);
    let mut a = zeros(g.m(), g.m());
    for (i, &(_, t)) in ends.iter().enumerate() {
        for (j, &(s, _)) in ends.iter().enumerate() {
            if t == s {
                a[i][j] = 1;
            }
        }
    }
    a
}

/// Dense adjacency of a materialized graph.
pub fn adjacency(g: &Graph) -> Dense {
    let mut a = zeros(g.n(), g.n());
    for (s, t) in endpoints(g) {
        a[s][t] = 1;
    }
    a
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// All injective maps `0..k → 0..n`.
fn injections(k: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(k, prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(k, &mut Vec::new(), &mut vec![false; n], &mut out);
    }
    out
}

/// Edge label sets keyed by ordered index pair.
fn label_table(g: &Graph) -> Vec<Vec<Option<Vec<u32>>>> {
    let mut table = vec![vec![None; g.n()]; g.n()];
    for e in g.edges() {
        table[e.source][e.target] = Some(e.labels.as_slice().to_vec());
    }
    table
}

/// Counts bijections preserving vertex labels and every ordered pair's
/// label set (including absence).
pub fn brute_isomorphisms(g1: &Graph, g2: &Graph) -> u64 {
    if g1.n() != g2.n() {
        return 0;
    }
    let (t1, t2) = (label_table(g1), label_table(g2));
    permutations(g1.n())
        .into_iter()
        .filter(|f| {
            (0..g1.n()).all(|v| g1.vertex_label(v) == g2.vertex_label(f[v]))
                && (0..g1.n()).all(|u| (0..g1.n()).all(|v| t1[u][v] == t2[f[u]][f[v]]))
        })
        .count() as u64
}

/// Injective label-preserving maps carrying every pattern edge onto a graph
/// edge with the same label set, with per-vertex and per-edge frequencies.
pub fn brute_match_stats(pattern: &Graph, graph: &Graph) -> MatchStats {
    let (tp, tg) = (label_table(pattern), label_table(graph));
    let mut stats = MatchStats {
        count: 0,
        node_freq: vec![0; graph.n()],
        edge_freq: vec![0; graph.m()],
    };
    let edge_pos: std::collections::HashMap<(usize, usize), usize> = endpoints(graph)
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, i))
        .collect();
    for f in injections(pattern.n(), graph.n()) {
        let labels_ok =
            (0..pattern.n()).all(|v| pattern.vertex_label(v) == graph.vertex_label(f[v]));
        let edges_ok = pattern
            .edges()
            .iter()
            .all(|e| tp[e.source][e.target] == tg[f[e.source]][f[e.target]]);
        if labels_ok && edges_ok {
            stats.count += 1;
            for &v in &f {
                stats.node_freq[v] += 1;
            }
            for e in pattern.edges() {
                stats.edge_freq[edge_pos[&(f[e.source], f[e.target])]] += 1;
            }
        }
    }
    stats
}

/// Like [`brute_match_stats`]'s count, but a pattern edge only needs its
/// labels to be a subset of the image edge's labels.
pub fn brute_count_label_subset(pattern: &Graph, graph: &Graph) -> u64 {
    let (tp, tg) = (label_table(pattern), label_table(graph));
    injections(pattern.n(), graph.n())
        .into_iter()
        .filter(|f| {
            (0..pattern.n()).all(|v| pattern.vertex_label(v) == graph.vertex_label(f[v]))
                && pattern.edges().iter().all(|e| {
                    let want = tp[e.source][e.target].as_ref().expect("pattern edge");
                    tg[f[e.source]][f[e.target]]
                        .as_ref()
                        .is_some_and(|have| want.iter().all(|l| have.contains(l)))
                })
        })
        .count() as u64
}

/// Whether some ordered pair `(u, v)`, `u ≠ v`, has edges both ways.
pub fn has_antiparallel_edges(g: &Graph) -> bool {
    g.edges()
        .iter()
        .any(|e| e.source != e.target && g.edge_index(e.target, e.source).is_some())
}

/// Random connected edge-induced subgraph of `g` on `min_k..=max_k`
/// vertices (fewer if `g` is smaller), keeping the full label set of each
/// chosen edge.
pub fn sample_subgraph(g: &Graph, min_k: usize, max_k: usize, rng: &mut impl Rng) -> Graph {
    let hi = max_k.min(g.n());
    let k = rng.gen_range(min_k.min(hi)..=hi);
    let start = rng.gen_range(0..g.n());
    let mut chosen: BTreeSet<usize> = BTreeSet::from([start]);
    let mut tree_edges: Vec<usize> = Vec::new();
    let neighbor_edges = |chosen: &BTreeSet<usize>| -> Vec<(usize, usize)> {
        g.edges()
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let (a, b) = (chosen.contains(&e.source), chosen.contains(&e.target));
                match (a, b) {
                    (true, false) => Some((i, e.target)),
                    (false, true) => Some((i, e.source)),
                    _ => None,
                }
            })
            .collect()
    };
    while chosen.len() < k {
        let frontier = neighbor_edges(&chosen);
        let Some(&(edge, v)) = frontier.choose(rng) else {
            break;
        };
        chosen.insert(v);
        tree_edges.push(edge);
    }
    let mut keep: BTreeSet<usize> = tree_edges.into_iter().collect();
    for (i, e) in g.edges().iter().enumerate() {
        if chosen.contains(&e.source) && chosen.contains(&e.target) && rng.gen_bool(0.5) {
            keep.insert(i);
        }
    }
    let vertices: Vec<(u64, u32)> = chosen
        .iter()
        .map(|&v| (g.vertices()[v].id, g.vertex_label(v)))
        .collect();
    let edges: Vec<RawEdge> = keep
        .into_iter()
        .map(|i| {
            let e = &g.edges()[i];
            RawEdge::new(
                g.vertices()[e.source].id,
                g.vertices()[e.target].id,
                e.labels.as_slice().to_vec(),
            )
        })
        .collect();
    Graph::new(g.n_vertex_labels(), g.n_edge_labels(), &vertices, &edges)
        .expect("subgraph is valid")
}

/// Copy of `g` with vertex ids shuffled, so vertex order is permuted.
pub fn shuffled_copy(g: &Graph, rng: &mut impl Rng) -> Graph {
    let mut ids: Vec<u64> = (0..g.n() as u64).collect();
    ids.shuffle(rng);
    g.relabel_ids(&ids).expect("permutation is a bijection")
}
