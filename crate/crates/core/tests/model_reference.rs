//! The sparse-matrix forward pass against a per-vertex, per-edge loop
//! implementation of the same update rules.

mod common;

use dmpnn_core::datagen::gen_hetero;
use dmpnn_core::linalg::DenseMatrix;
use dmpnn_core::model::{
    layer_param, predict, DmpnnParams, GraphTensors, InitScale, ModelConfig, COUNT_BIAS,
    COUNT_WEIGHT, EDGE, NODE_BIAS, NODE_WEIGHT, VERTEX,
};
use dmpnn_core::Graph;

type Rows = Vec<Vec<f64>>;

fn times(x: &[f64], w: &DenseMatrix) -> Vec<f64> {
    (0..w.cols())
        .map(|j| x.iter().enumerate().map(|(i, v)| v * w.get(i, j)).sum())
        .collect()
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (s, v) in acc.iter_mut().zip(x) {
        *s += a * v;
    }
}

fn reference_encode(g: &Graph, params: &DmpnnParams) -> (Rows, Vec<f64>) {
    let c = &params.config;
    let wv = params.get(VERTEX);
    let we = params.get(EDGE);
    let mut h: Rows = (0..g.n())
        .map(|v| {
            let mut x = vec![0.0; c.width];
            if c.vertex_ids {
                axpy(&mut x, 1.0, wv.row(v));
            }
            axpy(&mut x, 1.0, wv.row(c.max_n + g.vertex_label(v) as usize));
            x
        })
        .collect();
    let mut z: Rows = g
        .edges()
        .iter()
        .map(|e| {
            let mut x = vec![0.0; c.width];
            for l in e.labels.iter() {
                axpy(&mut x, 1.0, we.row(l as usize));
            }
            x
        })
        .collect();
    let line_out: Vec<f64> = g
        .edges()
        .iter()
        .map(|e| g.edges().iter().filter(|f| f.source == e.target).count() as f64)
        .collect();
    for k in 1..=c.k_layers {
        let w = |name: &str| params.get(&layer_param(k, name));
        let mut h_next: Rows = h.iter().map(|x| times(x, w("theta0"))).collect();
        let mut z_next: Rows = z.iter().map(|x| times(x, w("gamma0"))).collect();
        for (i, e) in g.edges().iter().enumerate() {
            axpy(&mut h_next[e.source], -2.0, &times(&z[i], w("theta_minus")));
            axpy(&mut h_next[e.target], 2.0, &times(&z[i], w("theta_plus")));
            let scale = 2.0 * (line_out[i] + 1.0);
            axpy(&mut z_next[i], scale, &times(&z[i], w("gamma_minus")));
            axpy(&mut z_next[i], -scale, &times(&z[i], w("gamma_plus")));
            axpy(&mut z_next[i], -2.0, &times(&h[e.source], w("gamma_minus")));
            axpy(&mut z_next[i], 2.0, &times(&h[e.target], w("gamma_plus")));
        }
        if c.activation && k < c.k_layers {
            for x in h_next.iter_mut().chain(z_next.iter_mut()) {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        h = h_next;
        z = z_next;
    }
    let mut pooled = vec![0.0; c.width];
    for x in &h {
        axpy(&mut pooled, 1.0, x);
    }
    (h, pooled)
}

fn reference_head(x: &[f64], p: &[f64], w: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let features: Vec<f64> = x
        .iter()
        .chain(p)
        .copied()
        .chain(x.iter().zip(p).map(|(a, b)| a - b))
        .chain(x.iter().zip(p).map(|(a, b)| a * b))
        .collect();
    times(&features, w)[0] + b.get(0, 0)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn check(pattern: &Graph, graph: &Graph, config: &ModelConfig, seed: u64) {
    let scale = InitScale::from_graphs([pattern, graph]);
    let params = DmpnnParams::init(config, scale, seed);
    let got = predict(
        &params,
        &GraphTensors::new(pattern, config).unwrap(),
        &GraphTensors::new(graph, config).unwrap(),
    )
    .unwrap();
    let (_, p) = reference_encode(pattern, &params);
    let (h, g) = reference_encode(graph, &params);
    let count = reference_head(&g, &p, params.get(COUNT_WEIGHT), params.get(COUNT_BIAS));
    assert!(close(got.count, count), "count {} vs {count}", got.count);
    for (v, x) in h.iter().enumerate() {
        let want = reference_head(x, &p, params.get(NODE_WEIGHT), params.get(NODE_BIAS));
        assert!(
            close(got.node[v], want),
            "vertex {v}: {} vs {want}",
            got.node[v]
        );
    }
}

#[test]
fn forward_matches_loop_reference() {
    for seed in 0..6u64 {
        let pattern = gen_hetero(3, 4, 2, 2, seed)
            .unwrap()
            .add_reversed_edges()
            .unwrap();
        let graph = gen_hetero(7, 12, 2, 2, 100 + seed)
            .unwrap()
            .add_reversed_edges()
            .unwrap();
        let config = ModelConfig {
            max_n: 8,
            n_vertex_labels: 2,
            n_edge_labels: 4,
            k_layers: 3,
            width: 6,
            activation: seed % 2 == 0,
            vertex_ids: seed % 3 != 0,
            ..ModelConfig::default()
        };
        check(&pattern, &graph, &config, seed);
    }
}

#[test]
fn forward_matches_reference_with_self_loops() {
    let config = ModelConfig {
        max_n: 4,
        n_vertex_labels: 1,
        n_edge_labels: 2,
        k_layers: 2,
        width: 5,
        ..ModelConfig::default()
    };
    let looped = Graph::new(
        1,
        2,
        &[(0, 0), (1, 0), (2, 0)],
        &[
            dmpnn_core::RawEdge::new(0, 0, vec![1]),
            dmpnn_core::RawEdge::new(0, 1, vec![0]),
            dmpnn_core::RawEdge::new(1, 2, vec![0, 1]),
            dmpnn_core::RawEdge::new(2, 0, vec![0]),
        ],
    )
    .unwrap();
    let pattern = Graph::new(1, 2, &[(0, 0)], &[dmpnn_core::RawEdge::new(0, 0, vec![1])]).unwrap();
    check(&pattern, &looped, &config, 11);
}
