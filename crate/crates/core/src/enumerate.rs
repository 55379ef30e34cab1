//! Exhaustive enumeration of small connected graphs, up to isomorphism.
//!
//! Graphs are built from undirected skeletons: every skeleton edge becomes
//! either a symmetric pair sharing one label set, or an oriented edge plus
//! its reversed partner. Duplicates are removed with a canonical code, the
//! lexicographic minimum of the serialized adjacency over all vertex
//! permutations.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::{Graph, Label, LabelSet, RawEdge, VertexId};

pub const MAX_ENUMERATION_N: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMode {
    /// Both directions carry the same label set.
    Symmetric,
    /// One direction carries the label set, the other its reversed copy.
    Oriented,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelConfig {
    pub n_vertex_labels: u32,
    /// Labels available on skeleton edges; every non-empty subset is tried.
    pub n_edge_labels: u32,
    pub mode: EdgeMode,
    pub min_n: usize,
}

impl LabelConfig {
    /// One vertex label, one edge label, symmetric edges.
    pub fn unlabeled() -> Self {
        Self {
            n_vertex_labels: 1,
            n_edge_labels: 1,
            mode: EdgeMode::Symmetric,
            min_n: 1,
        }
    }

    pub fn with_min_n(mut self, min_n: usize) -> Self {
        self.min_n = min_n;
        self
    }
}

/// Canonical code: vertex labels, then the row-major matrix of label-set
/// bitmasks (0 for no edge), minimized over vertex permutations.
pub fn canonical_code(g: &Graph) -> Vec<u64> {
    let n = g.n();
    let mut best: Option<Vec<u64>> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p| {
        let code = code_under(g, p);
        if best.as_ref().is_none_or(|b| code < *b) {
            best = Some(code);
        }
    });
    best.unwrap_or_default()
}

// p[i] = original vertex placed at position i
fn code_under(g: &Graph, p: &[usize]) -> Vec<u64> {
    let n = p.len();
    let mut code = Vec::with_capacity(n + n * n);
    code.extend(p.iter().map(|&v| g.vertex_label(v) as u64));
    for &u in p {
        for &v in p {
            code.push(g.edge_labels(u, v).map_or(0, mask));
        }
    }
    code
}

fn mask(labels: &LabelSet) -> u64 {
    labels.iter().fold(0u64, |acc, l| acc | (1u64 << l))
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Every connected graph with `min_n..=max_n` vertices under `config`, one
/// per isomorphism class, ordered by vertex count, edge count, descending
/// degree sequence and canonical code.
pub fn enumerate_connected_graphs(max_n: usize, config: LabelConfig) -> Result<Vec<Graph>> {
    if max_n > MAX_ENUMERATION_N {
        return Err(Error::GraphTooLarge {
            n: max_n,
            max_n: MAX_ENUMERATION_N,
        });
    }
    if config.n_vertex_labels == 0 || config.n_edge_labels == 0 || config.n_edge_labels > 8 {
        return Err(Error::Precondition(
            "label config needs 1..=8 edge labels and at least one vertex label".into(),
        ));
    }
    let label_sets: Vec<Vec<Label>> = (1u32..(1 << config.n_edge_labels))
        .map(|m| {
            (0..config.n_edge_labels)
                .filter(|b| m & (1 << b) != 0)
                .collect()
        })
        .collect();
    let orientations: &[bool] = match config.mode {
        EdgeMode::Symmetric => &[false],
        EdgeMode::Oriented => &[false, true],
    };
    // per skeleton edge: (label set index, flipped)
    let edge_choices: Vec<(usize, bool)> = (0..label_sets.len())
        .flat_map(|l| orientations.iter().map(move |&o| (l, o)))
        .collect();

    let mut seen = HashSet::new();
    let mut found: Vec<(Vec<u64>, Graph)> = Vec::new();
    for n in config.min_n.max(1)..=max_n {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        for subset in 0u32..(1 << pairs.len()) {
            let skeleton: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| subset & (1 << i) != 0)
                .map(|(_, &p)| p)
                .collect();
            if !skeleton_connected(n, &skeleton) {
                continue;
            }
            for_each_tuple(n, config.n_vertex_labels as usize, &mut |vlabels| {
                for_each_tuple(skeleton.len(), edge_choices.len(), &mut |choice| {
                    let g = materialize(
                        vlabels,
                        &skeleton,
                        choice,
                        &edge_choices,
                        &label_sets,
                        config,
                    );
                    let code = canonical_code(&g);
                    if seen.insert(code.clone()) {
                        found.push((code, g));
                    }
                });
            });
        }
    }
    found.sort_by(|(ca, a), (cb, b)| {
        (a.n(), a.m(), std::cmp::Reverse(degree_sequence(a)), ca).cmp(&(
            b.n(),
            b.m(),
            std::cmp::Reverse(degree_sequence(b)),
            cb,
        ))
    });
    Ok(found.into_iter().map(|(_, g)| g).collect())
}

fn degree_sequence(g: &Graph) -> Vec<usize> {
    let mut d: Vec<usize> = (0..g.n()).map(|v| g.out_degree(v)).collect();
    d.sort_unstable_by(|a, b| b.cmp(a));
    d
}

fn materialize(
    vlabels: &[usize],
    skeleton: &[(usize, usize)],
    choice: &[usize],
    edge_choices: &[(usize, bool)],
    label_sets: &[Vec<Label>],
    config: LabelConfig,
) -> Graph {
    let vertices: Vec<(VertexId, Label)> = vlabels
        .iter()
        .enumerate()
        .map(|(i, &l)| (i as VertexId, l as Label))
        .collect();
    let mut raw = Vec::new();
    for (&(u, v), &c) in skeleton.iter().zip(choice) {
        let (set, flipped) = edge_choices[c];
        let labels = &label_sets[set];
        let (s, t) = if flipped { (v, u) } else { (u, v) };
        raw.push(RawEdge::new(s as VertexId, t as VertexId, labels.clone()));
        if config.mode == EdgeMode::Symmetric {
            raw.push(RawEdge::new(t as VertexId, s as VertexId, labels.clone()));
        }
    }
    let g = Graph::new(
        config.n_vertex_labels,
        config.n_edge_labels,
        &vertices,
        &raw,
    )
    .expect("enumerated graphs are valid");
    match config.mode {
        EdgeMode::Symmetric => g,
        EdgeMode::Oriented => g.add_reversed_edges().expect("fresh graph"),
    }
}

fn skeleton_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut components = n;
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components <= 1
}

/// Visits every vector of length `len` over `0..base`.
fn for_each_tuple(len: usize, base: usize, visit: &mut dyn FnMut(&[usize])) {
    let mut t = vec![0; len];
    loop {
        visit(&t);
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            t[i] += 1;
            if t[i] < base {
                break;
            }
            t[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iso::count_isomorphisms;

    #[test]
    fn up_to_two_vertices() {
        let gs = enumerate_connected_graphs(2, LabelConfig::unlabeled()).unwrap();
        assert_eq!(gs.len(), 2);
        assert_eq!((gs[0].n(), gs[0].m()), (1, 0));
        assert_eq!((gs[1].n(), gs[1].m()), (2, 2));
    }

    #[test]
    fn single_vertex_single_label() {
        let gs = enumerate_connected_graphs(1, LabelConfig::unlabeled()).unwrap();
        assert_eq!(gs.len(), 1);
    }

    #[test]
    fn nine_small_graphs_in_order() {
        let gs = enumerate_connected_graphs(4, LabelConfig::unlabeled().with_min_n(2)).unwrap();
        let autos: Vec<u64> = gs.iter().map(|g| count_isomorphisms(g, g)).collect();
        assert_eq!(autos, vec![2, 2, 6, 6, 2, 2, 8, 4, 24]);
    }

    #[test]
    fn classes_are_pairwise_non_isomorphic() {
        let config = LabelConfig {
            n_vertex_labels: 2,
            n_edge_labels: 1,
            mode: EdgeMode::Oriented,
            min_n: 1,
        };
        let gs = enumerate_connected_graphs(3, config).unwrap();
        for (i, a) in gs.iter().enumerate() {
            for b in &gs[i + 1..] {
                assert_eq!(count_isomorphisms(a, b), 0);
            }
        }
        assert!(gs
            .iter()
            .all(|g| g.has_reversed_edges() && g.is_connected()));
    }

    #[test]
    fn oriented_paths_on_three_vertices() {
        // Skeleton P3 with one edge label: 0←1→2, 0→1←2 and 0→1→2 patterns.
        let config = LabelConfig {
            n_vertex_labels: 1,
            n_edge_labels: 1,
            mode: EdgeMode::Oriented,
            min_n: 3,
        };
        let gs = enumerate_connected_graphs(3, config).unwrap();
        let paths = gs.iter().filter(|g| g.m() == 4).count();
        assert_eq!(paths, 3);
    }

    #[test]
    fn canonical_code_is_permutation_invariant() {
        let g = Graph::from_parts(
            2,
            2,
            &[0, 1, 1],
            &[(0, 1, &[0]), (1, 2, &[1]), (2, 1, &[0, 1])],
        )
        .unwrap();
        let h = g.relabel_ids(&[7, 3, 5]).unwrap();
        assert_eq!(canonical_code(&g), canonical_code(&h));
    }

    #[test]
    fn size_guard() {
        assert!(matches!(
            enumerate_connected_graphs(6, LabelConfig::unlabeled()),
            Err(Error::GraphTooLarge { .. })
        ));
    }
}
