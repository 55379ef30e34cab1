//! Wall-clock scaling of a single dual layer.

use std::time::Instant;

use serde::Serialize;

use crate::datagen::gen_hetero;
use crate::error::Result;
use crate::linalg::DenseMatrix;
use crate::model::{dmpnn_layer, DmpnnParams, GraphTensors, InitScale, ModelConfig};
use crate::tape::Tape;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchPoint {
    pub m: usize,
    pub n: usize,
    /// Fastest of the repetitions, in seconds.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub width: usize,
    pub points: Vec<BenchPoint>,
    /// Coefficient of determination of the least-squares line `t = a + b·m`.
    pub r_squared: f64,
    /// Time at the largest size over time at the smallest.
    pub ratio: f64,
}

struct Case {
    params: DmpnnParams,
    tensors: GraphTensors,
    h: DenseMatrix,
    z: DenseMatrix,
}

impl Case {
    fn time_once(&self) -> Result<f64> {
        let mut tape = Tape::new();
        let pv = self.params.register(&mut tape);
        let hv = tape.constant(self.h.clone());
        let zv = tape.constant(self.z.clone());
        let start = Instant::now();
        let out = dmpnn_layer(&mut tape, &pv, 1, &self.tensors, hv, zv, false)?;
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box(out);
        Ok(elapsed)
    }
}

/// Times one layer forward on random graphs with `m` edges and `m / 4`
/// vertices. After one warm-up pass, each of `reps` rounds times every size
/// once, so slow drift in machine speed affects all sizes alike and no size
/// runs straight after itself with a hot cache. The minimum per size is
/// reported.
pub fn bench_layer(sizes: &[usize], width: usize, reps: usize, seed: u64) -> Result<BenchReport> {
    let cases = sizes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let n = (m / 4).max(2);
            let g = gen_hetero(n, m, 1, 1, seed.wrapping_add(i as u64))?;
            let config = ModelConfig {
                max_n: n,
                n_vertex_labels: 1,
                n_edge_labels: 1,
                k_layers: 1,
                width,
                activation: false,
                vertex_ids: false,
                ..Default::default()
            };
            Ok(Case {
                params: DmpnnParams::init(&config, InitScale::default(), seed),
                tensors: GraphTensors::new(&g, &config)?,
                h: DenseMatrix::filled(g.n(), width, 0.5),
                z: DenseMatrix::filled(g.m(), width, 0.25),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for case in &cases {
        case.time_once()?;
    }
    let mut best = vec![f64::INFINITY; cases.len()];
    for _ in 0..reps.max(1) {
        for (b, case) in best.iter_mut().zip(&cases) {
            *b = b.min(case.time_once()?);
        }
    }
    let points: Vec<BenchPoint> = cases
        .iter()
        .zip(&best)
        .map(|(c, &seconds)| BenchPoint {
            m: c.tensors.m,
            n: c.tensors.n,
            seconds,
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.m as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let ratio = match (ys.first(), ys.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a,
        _ => f64::NAN,
    };
    Ok(BenchReport {
        width,
        points,
        r_squared: r_squared(&xs, &ys),
        ratio,
    })
}

/// R² of the ordinary least-squares line through `(x, y)`.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}
