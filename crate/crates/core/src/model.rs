//! Dual message passing network.
//!
//! Vertex states `H` (n × l) and edge states `Z` (m × l) are updated jointly:
//!
//! ```text
//! H' = H·Wθ0 − (B̂−B)·Z·Wθ⁻ + (B̂+B)·Z·Wθ⁺
//! Z' = Z·Wγ0 + 2(D_H+I)·Z·(Wγ⁻ − Wγ⁺) − (B̂−B)ᵀ·H·Wγ⁻ + (B̂+B)ᵀ·H·Wγ⁺
//! ```
//!
//! where `B` and `B̂` are the oriented and unoriented incidence matrices and
//! `D_H` holds line-graph degrees. Pattern and graph are encoded by the same
//! weights, sum-pooled, and read out by affine heads on
//! `[x ‖ p ‖ x − p ‖ x ⊙ p]`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::line_graph::line_degree_diagonal;
use crate::tape::{SparseOperand, Tape, Var};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    /// Subgraph counting plus per-vertex matching.
    CountMatch,
    /// DistMult link prediction on graph edges.
    LinkPred,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub max_n: usize,
    pub n_vertex_labels: u32,
    pub n_edge_labels: u32,
    pub k_layers: usize,
    pub width: usize,
    /// ReLU between layers (never after the last one).
    pub activation: bool,
    /// Include the one-hot vertex position block in the input encoding.
    pub vertex_ids: bool,
    pub mode: TaskMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            max_n: 64,
            n_vertex_labels: 1,
            n_edge_labels: 2,
            k_layers: 3,
            width: 64,
            activation: true,
            vertex_ids: true,
            mode: TaskMode::CountMatch,
        }
    }
}

/// Spectral bounds that scale the initial message weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitScale {
    pub lambda_g: f64,
    pub lambda_h: f64,
}

impl Default for InitScale {
    fn default() -> Self {
        Self {
            lambda_g: 1.0,
            lambda_h: 1.0,
        }
    }
}

impl InitScale {
    /// Largest bounds over a collection of graphs.
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> Self {
        graphs.into_iter().fold(Self::default(), |acc, g| {
            let (lg, lh) = g.lambda_max_bounds();
            Self {
                lambda_g: acc.lambda_g.max(lg),
                lambda_h: acc.lambda_h.max(lh),
            }
        })
    }
}

pub const VERTEX: &str = "w_vertex";
pub const EDGE: &str = "w_edge";
pub const COUNT_WEIGHT: &str = "count_head.weight";
pub const COUNT_BIAS: &str = "count_head.bias";
pub const NODE_WEIGHT: &str = "node_head.weight";
pub const NODE_BIAS: &str = "node_head.bias";
pub const RELATIONS: &str = "relations";

const THETA: [&str; 3] = ["theta0", "theta_minus", "theta_plus"];
const GAMMA: [&str; 3] = ["gamma0", "gamma_minus", "gamma_plus"];

pub fn layer_param(k: usize, name: &str) -> String {
    format!("layer{k}.{name}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Xavier,
    Theta,
    Gamma,
    Zero,
}

fn layout(config: &ModelConfig) -> Vec<(String, (usize, usize), Init)> {
    let l = config.width;
    let mut out = vec![
        (
            VERTEX.to_string(),
            (config.max_n + config.n_vertex_labels as usize, l),
            Init::Xavier,
        ),
        (
            EDGE.to_string(),
            (config.n_edge_labels as usize, l),
            Init::Xavier,
        ),
    ];
    for k in 1..=config.k_layers {
        for name in THETA {
            out.push((layer_param(k, name), (l, l), Init::Theta));
        }
        for name in GAMMA {
            out.push((layer_param(k, name), (l, l), Init::Gamma));
        }
    }
    match config.mode {
        TaskMode::CountMatch => {
            out.push((COUNT_WEIGHT.to_string(), (4 * l, 1), Init::Xavier));
            out.push((COUNT_BIAS.to_string(), (1, 1), Init::Zero));
            out.push((NODE_WEIGHT.to_string(), (4 * l, 1), Init::Xavier));
            out.push((NODE_BIAS.to_string(), (1, 1), Init::Zero));
        }
        TaskMode::LinkPred => {
            out.push((
                RELATIONS.to_string(),
                (config.n_edge_labels as usize, l),
                Init::Xavier,
            ));
        }
    }
    out
}

/// Named parameter tensors of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct DmpnnParams {
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, DenseMatrix>,
}

impl DmpnnParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = layout(config)
            .into_iter()
            .map(|(name, (r, c), _)| (name, DenseMatrix::zeros(r, c)))
            .collect();
        Self {
            config: config.clone(),
            tensors,
        }
    }

    /// Uniform initialization: message weights `θ` within
    /// `±√(6/(l_in+l_out))/λ_G`, `γ` within `±√(6/(l_in+l_out))/λ_H`, other
    /// weights Xavier-uniform, biases zero.
    pub fn init(config: &ModelConfig, scale: InitScale, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout(config)
            .into_iter()
            .map(|(name, (r, c), init)| {
                let xavier = (6.0 / (r + c) as f64).sqrt();
                let bound = match init {
                    Init::Xavier => xavier,
                    Init::Theta => xavier / scale.lambda_g,
                    Init::Gamma => xavier / scale.lambda_h,
                    Init::Zero => 0.0,
                };
                let data = (0..r * c)
                    .map(|_| {
                        if bound > 0.0 {
                            rng.gen_range(-bound..=bound)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (name, DenseMatrix::from_vec(r, c, data).expect("finite"))
            })
            .collect();
        Self {
            config: config.clone(),
            tensors,
        }
    }

    pub fn get(&self, name: &str) -> &DenseMatrix {
        &self.tensors[name]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut DenseMatrix {
        self.tensors.get_mut(name).expect("known parameter")
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    /// Records every tensor on `tape` as a named parameter.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars(
            self.tensors
                .iter()
                .map(|(name, t)| (name.clone(), tape.param(name, t.clone())))
                .collect(),
        )
    }

    pub fn to_checkpoint_json(&self) -> String {
        let record = CheckpointRecord {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorRecord {
                    name: name.clone(),
                    shape: [t.rows(), t.cols()],
                    values: t.as_slice().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&record).expect("checkpoints serialize")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let record: CheckpointRecord = serde_json::from_str(text)?;
        if record.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                record.format_version
            )));
        }
        let expected = layout(&record.config);
        if expected.len() != record.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                record.tensors.len()
            )));
        }
        let mut given: BTreeMap<String, TensorRecord> = record
            .tensors
            .into_iter()
            .map(|t| (t.name.clone(), t))
            .collect();
        let mut tensors = BTreeMap::new();
        for (name, (r, c), _) in expected {
            let t = given
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape != [r, c] {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected [{r}, {c}]",
                    t.shape
                )));
            }
            let m = DenseMatrix::from_vec(r, c, t.values)
                .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
            tensors.insert(name, m);
        }
        Ok(Self {
            config: record.config,
            tensors,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<TensorRecord>,
}

/// Tape handles of the parameters, by name.
pub struct ParamVars(BTreeMap<String, Var>);

impl ParamVars {
    pub fn get(&self, name: &str) -> Var {
        self.0[name]
    }
}

/// Graph-dependent operands of the forward pass.
#[derive(Clone, Debug)]
pub struct GraphTensors {
    pub n: usize,
    pub m: usize,
    /// `B̂ − B`: 2 at each edge's source.
    pub sources: SparseOperand,
    /// `B̂ + B`: 2 at each edge's target.
    pub targets: SparseOperand,
    /// Diagonal of `D_H + I`.
    pub dh_plus_i: Arc<Vec<f64>>,
    /// n × (max_n + n_vertex_labels) input selector.
    pub selector: SparseOperand,
    /// m × n_edge_labels label-set indicator.
    pub multi_hot: SparseOperand,
}

impl GraphTensors {
    pub fn new(g: &Graph, config: &ModelConfig) -> Result<Self> {
        if g.n() > config.max_n {
            return Err(Error::GraphTooLarge {
                n: g.n(),
                max_n: config.max_n,
            });
        }
        if let Some(v) = g
            .vertices()
            .iter()
            .find(|v| v.label >= config.n_vertex_labels)
        {
            return Err(Error::LabelOutOfRange {
                kind: "vertex",
                label: v.label,
                limit: config.n_vertex_labels,
            });
        }
        if let Some(l) = g
            .edges()
            .iter()
            .flat_map(|e| e.labels.iter())
            .find(|&l| l >= config.n_edge_labels)
        {
            return Err(Error::LabelOutOfRange {
                kind: "edge",
                label: l,
                limit: config.n_edge_labels,
            });
        }
        let inc = g.incidence_matrices();
        let to_f64 = |s: SparseMatrix<i64>| s.map(|v| v as f64);
        let sources = to_f64(inc.unoriented.sub(&inc.oriented)?);
        let targets = to_f64(inc.unoriented.add(&inc.oriented)?);
        let dh_plus_i = line_degree_diagonal(g)
            .diagonal()
            .into_iter()
            .map(|d| d as f64 + 1.0)
            .collect();
        let mut sel = Vec::with_capacity(2 * g.n());
        for (v, vertex) in g.vertices().iter().enumerate() {
            if config.vertex_ids {
                sel.push((v, v, 1.0));
            }
            sel.push((v, config.max_n + vertex.label as usize, 1.0));
        }
        let selector = SparseMatrix::from_triplets(
            g.n(),
            config.max_n + config.n_vertex_labels as usize,
            sel,
        )?;
        let hot = g
            .edges()
            .iter()
            .enumerate()
            .flat_map(|(i, e)| e.labels.iter().map(move |l| (i, l as usize, 1.0)));
        let multi_hot = SparseMatrix::from_triplets(g.m(), config.n_edge_labels as usize, hot)?;
        Ok(Self {
            n: g.n(),
            m: g.m(),
            sources: SparseOperand::new(sources),
            targets: SparseOperand::new(targets),
            dh_plus_i: Arc::new(dh_plus_i),
            selector: SparseOperand::new(selector),
            multi_hot: SparseOperand::new(multi_hot),
        })
    }
}

/// `H0 = S·W_vertex`, `Z0 = M·W_edge`.
pub fn encode_inputs(tape: &mut Tape, pv: &ParamVars, gt: &GraphTensors) -> Result<(Var, Var)> {
    let h = tape.spmm(&gt.selector, pv.get(VERTEX))?;
    let z = tape.spmm(&gt.multi_hot, pv.get(EDGE))?;
    Ok((h, z))
}

/// One dual layer; `k` is 1-based.
pub fn dmpnn_layer(
    tape: &mut Tape,
    pv: &ParamVars,
    k: usize,
    gt: &GraphTensors,
    h: Var,
    z: Var,
    activate: bool,
) -> Result<(Var, Var)> {
    let w = |name: &str| pv.get(&layer_param(k, name));
    let (t0, t_minus, t_plus) = (w("theta0"), w("theta_minus"), w("theta_plus"));
    let (g0, g_minus, g_plus) = (w("gamma0"), w("gamma_minus"), w("gamma_plus"));

    let src_z = tape.spmm(&gt.sources, z)?;
    let tgt_z = tape.spmm(&gt.targets, z)?;
    let self_h = tape.matmul(h, t0)?;
    let out_msg = tape.matmul(src_z, t_minus)?;
    let in_msg = tape.matmul(tgt_z, t_plus)?;
    let h_next = tape.sub(self_h, out_msg)?;
    let h_next = tape.add(h_next, in_msg)?;

    let src_h = tape.spmm(&gt.sources.transposed(), h)?;
    let tgt_h = tape.spmm(&gt.targets.transposed(), h)?;
    let self_z = tape.matmul(z, g0)?;
    let dz = tape.diag_scale(gt.dh_plus_i.clone(), z)?;
    let dz = tape.scale(dz, 2.0);
    let g_diff = tape.sub(g_minus, g_plus)?;
    let line_msg = tape.matmul(dz, g_diff)?;
    let from_src = tape.matmul(src_h, g_minus)?;
    let from_tgt = tape.matmul(tgt_h, g_plus)?;
    let z_next = tape.add(self_z, line_msg)?;
    let z_next = tape.sub(z_next, from_src)?;
    let z_next = tape.add(z_next, from_tgt)?;

    if activate {
        Ok((tape.relu(h_next), tape.relu(z_next)))
    } else {
        Ok((h_next, z_next))
    }
}

/// Final vertex and edge states plus the sum-pooled vertex state.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub h: Var,
    pub z: Var,
    pub pooled: Var,
}

pub fn encode_graph(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    gt: &GraphTensors,
) -> Result<Encoded> {
    let (mut h, mut z) = encode_inputs(tape, pv, gt)?;
    for k in 1..=config.k_layers {
        let activate = config.activation && k < config.k_layers;
        (h, z) = dmpnn_layer(tape, pv, k, gt, h, z, activate)?;
    }
    let pooled = tape.sum_rows(h);
    Ok(Encoded { h, z, pooled })
}

#[derive(Clone, Copy, Debug)]
pub struct PairOutput {
    pub pattern: Encoded,
    pub graph: Encoded,
}

pub fn forward(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    pattern: &GraphTensors,
    graph: &GraphTensors,
) -> Result<PairOutput> {
    Ok(PairOutput {
        pattern: encode_graph(tape, pv, config, pattern)?,
        graph: encode_graph(tape, pv, config, graph)?,
    })
}

/// `[x ‖ p ‖ x − p ‖ x ⊙ p]·W + b`, with `p` broadcast over the rows of `x`.
fn head(tape: &mut Tape, x: Var, p: Var, weight: Var, bias: Var) -> Result<Var> {
    let rows = tape.value(x).rows();
    let p = tape.broadcast_rows(p, rows)?;
    let diff = tape.sub(x, p)?;
    let prod = tape.hadamard(x, p)?;
    let features = tape.concat_cols(&[x, p, diff, prod])?;
    let out = tape.matmul(features, weight)?;
    let b = tape.broadcast_rows(bias, rows)?;
    tape.add(out, b)
}

/// Raw count prediction (1 × 1).
pub fn predict_count(tape: &mut Tape, pv: &ParamVars, g: Var, p: Var) -> Result<Var> {
    head(tape, g, p, pv.get(COUNT_WEIGHT), pv.get(COUNT_BIAS))
}

/// Raw per-vertex predictions (n × 1).
pub fn predict_node(tape: &mut Tape, pv: &ParamVars, h: Var, p: Var) -> Result<Var> {
    head(tape, h, p, pv.get(NODE_WEIGHT), pv.get(NODE_BIAS))
}

/// `Σᵢ h_u[i]·r_y[i]·h_v[i]`.
pub fn distmult_score(
    h_u: &[f64],
    relation: usize,
    h_v: &[f64],
    params: &DmpnnParams,
) -> Result<f64> {
    let r = params
        .tensors
        .get(RELATIONS)
        .ok_or_else(|| Error::Precondition("model has no relation vectors".into()))?;
    if relation >= r.rows() {
        return Err(Error::RelationOutOfRange {
            relation,
            n_relations: r.rows(),
        });
    }
    if h_u.len() != r.cols() || h_v.len() != r.cols() {
        return Err(Error::DimensionMismatch {
            op: "distmult_score",
            left: (h_u.len(), h_v.len()),
            right: (r.cols(), r.cols()),
        });
    }
    Ok(h_u
        .iter()
        .zip(r.row(relation))
        .zip(h_v)
        .map(|((a, b), c)| a * b * c)
        .sum())
}

/// DistMult scores of `(heads[i], relations[i], tails[i])` as a column.
pub fn distmult_scores(
    tape: &mut Tape,
    pv: &ParamVars,
    h: Var,
    heads: Arc<Vec<usize>>,
    relations: Arc<Vec<usize>>,
    tails: Arc<Vec<usize>>,
) -> Result<Var> {
    let hu = tape.gather_rows(h, heads)?;
    let r = tape.gather_rows(pv.get(RELATIONS), relations)?;
    let hv = tape.gather_rows(h, tails)?;
    let a = tape.hadamard(hu, r)?;
    let b = tape.hadamard(a, hv)?;
    Ok(tape.sum_cols(b))
}

/// Raw predictions for one pair; clamp with `max(0)` before reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub count: f64,
    pub node: Vec<f64>,
}

pub fn predict(
    params: &DmpnnParams,
    pattern: &GraphTensors,
    graph: &GraphTensors,
) -> Result<Prediction> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let out = forward(&mut tape, &pv, &params.config, pattern, graph)?;
    let c = predict_count(&mut tape, &pv, out.graph.pooled, out.pattern.pooled)?;
    let w = predict_node(&mut tape, &pv, out.graph.h, out.pattern.pooled)?;
    Ok(Prediction {
        count: tape.value(c).get(0, 0),
        node: tape.value(w).as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> Graph {
        Graph::from_parts(1, 1, &[0, 0], &[(0, 1, &[0]), (1, 0, &[0])]).unwrap()
    }

    fn small_config(width: usize, k: usize) -> ModelConfig {
        ModelConfig {
            max_n: 4,
            n_vertex_labels: 2,
            n_edge_labels: 2,
            k_layers: k,
            width,
            activation: false,
            vertex_ids: true,
            mode: TaskMode::CountMatch,
        }
    }

    #[test]
    fn encoder_selects_id_and_label_rows() {
        let config = small_config(2, 0);
        let mut params = DmpnnParams::zeros(&config);
        let w: Vec<f64> = (0..12).map(|i| i as f64).collect();
        *params.get_mut(VERTEX) = DenseMatrix::from_vec(6, 2, w).unwrap();
        *params.get_mut(EDGE) =
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![10.0, 20.0]]).unwrap();
        let g = Graph::from_parts(2, 2, &[0, 1], &[(0, 1, &[0, 1])]).unwrap();
        let gt = GraphTensors::new(&g, &config).unwrap();
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let (h, z) = encode_inputs(&mut tape, &pv, &gt).unwrap();
        // vertex 0, label 0 → rows 0 and 4; vertex 1, label 1 → rows 1 and 5
        assert_eq!(tape.value(h).row(0), &[0.0 + 8.0, 1.0 + 9.0]);
        assert_eq!(tape.value(h).row(1), &[2.0 + 10.0, 3.0 + 11.0]);
        assert_eq!(tape.value(z).row(0), &[11.0, 22.0]);
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let config = small_config(3, 2);
        let params = DmpnnParams::zeros(&config);
        let g = Graph::from_parts(2, 2, &[0, 1], &[(0, 1, &[0]), (1, 1, &[1])]).unwrap();
        let gt = GraphTensors::new(&g, &config).unwrap();
        let pred = predict(&params, &gt, &gt).unwrap();
        assert_eq!(
            pred,
            Prediction {
                count: 0.0,
                node: vec![0.0, 0.0]
            }
        );
    }

    fn scalar_params(config: &ModelConfig, value: f64) -> DmpnnParams {
        let mut p = DmpnnParams::zeros(config);
        for t in p.tensors.values_mut() {
            *t = DenseMatrix::filled(t.rows(), t.cols(), value);
        }
        p
    }

    #[test]
    fn pass_through_without_messages() {
        let config = small_config(2, 1);
        let mut params = DmpnnParams::zeros(&config);
        *params.get_mut(&layer_param(1, "theta0")) = DenseMatrix::identity(2);
        let gt = GraphTensors::new(&two_cycle(), &config).unwrap();
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let h = tape.constant(DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]).unwrap());
        let z = tape.constant(DenseMatrix::zeros(2, 2));
        let (h2, z2) = dmpnn_layer(&mut tape, &pv, 1, &gt, h, z, false).unwrap();
        assert_eq!(tape.value(h2), tape.value(h));
        assert_eq!(tape.value(z2), &DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn two_cycle_layer_by_hand() {
        // Scalar channel, all weights 1, H = Z = 1.
        // H'_v = h − Σ_{out} 2z + Σ_{in} 2z = 1 − 2 + 2 = 1
        // Z'_e = z + 2(d_H+1)z(1 − 1) − 2h_src + 2h_tgt = 1
        let config = small_config(1, 1);
        let params = scalar_params(&config, 1.0);
        let gt = GraphTensors::new(&two_cycle(), &config).unwrap();
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let h = tape.constant(DenseMatrix::filled(2, 1, 1.0));
        let z = tape.constant(DenseMatrix::filled(2, 1, 1.0));
        let (h2, z2) = dmpnn_layer(&mut tape, &pv, 1, &gt, h, z, false).unwrap();
        assert_eq!(tape.value(h2).as_slice(), &[1.0, 1.0]);
        assert_eq!(tape.value(z2).as_slice(), &[1.0, 1.0]);

        // Distinct θ/γ: θ0=2, θ⁻=3, θ⁺=5, γ0=7, γ⁻=11, γ⁺=13; h = (1, 2), z = (1, 1).
        let mut p = DmpnnParams::zeros(&config);
        for (name, v) in [
            ("theta0", 2.0),
            ("theta_minus", 3.0),
            ("theta_plus", 5.0),
            ("gamma0", 7.0),
            ("gamma_minus", 11.0),
            ("gamma_plus", 13.0),
        ] {
            *p.get_mut(&layer_param(1, name)) = DenseMatrix::filled(1, 1, v);
        }
        let mut tape = Tape::new();
        let pv = p.register(&mut tape);
        let h = tape.constant(DenseMatrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap());
        let z = tape.constant(DenseMatrix::filled(2, 1, 1.0));
        let (h2, z2) = dmpnn_layer(&mut tape, &pv, 1, &gt, h, z, false).unwrap();
        // H'_0 = 2·1 − 3·2 + 5·2 = 6, H'_1 = 2·2 − 6 + 10 = 8
        assert_eq!(tape.value(h2).as_slice(), &[6.0, 8.0]);
        // edge 0 = (0→1): 7 + 2·2·(11 − 13) − 11·2·1 + 13·2·2 = 7 − 8 − 22 + 52 = 29
        // edge 1 = (1→0): 7 − 8 − 11·2·2 + 13·2·1 = 7 − 8 − 44 + 26 = −19
        assert_eq!(tape.value(z2).as_slice(), &[29.0, -19.0]);
    }

    #[test]
    fn depth_zero_pools_inputs() {
        let config = small_config(2, 0);
        let params = DmpnnParams::init(&config, InitScale::default(), 3);
        let g = two_cycle();
        let gt = GraphTensors::new(&g, &config).unwrap();
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let enc = encode_graph(&mut tape, &pv, &config, &gt).unwrap();
        let (h0, _) = encode_inputs(&mut tape, &pv, &gt).unwrap();
        assert_eq!(tape.value(enc.pooled), &tape.value(h0).sum_rows());
    }

    #[test]
    fn head_is_affine_in_concatenation() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let p = tape.constant(DenseMatrix::from_rows(&[vec![3.0, 5.0]]).unwrap());
        let w = tape.constant(DenseMatrix::filled(8, 1, 1.0));
        let b = tape.constant(DenseMatrix::filled(1, 1, 0.5));
        let y = head(&mut tape, x, p, w, b).unwrap();
        // (1+2) + (3+5) + (−2−3) + (3+10) + 0.5
        assert_eq!(tape.value(y).get(0, 0), 19.5);

        let zero_w = tape.constant(DenseMatrix::zeros(8, 1));
        let y = head(&mut tape, x, p, zero_w, b).unwrap();
        assert_eq!(tape.value(y).get(0, 0), 0.5);
    }

    #[test]
    fn distmult_hand_case() {
        let config = ModelConfig {
            mode: TaskMode::LinkPred,
            ..small_config(2, 1)
        };
        let mut params = DmpnnParams::zeros(&config);
        *params.get_mut(RELATIONS) =
            DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(
            distmult_score(&[1.0, 2.0], 0, &[5.0, 6.0], &params).unwrap(),
            63.0
        );
        assert_eq!(
            distmult_score(&[1.0, 2.0], 1, &[5.0, 6.0], &params).unwrap(),
            17.0
        );
        assert_eq!(
            distmult_score(&[0.0, 0.0], 0, &[5.0, 6.0], &params).unwrap(),
            0.0
        );
        assert!(matches!(
            distmult_score(&[1.0, 2.0], 2, &[5.0, 6.0], &params),
            Err(Error::RelationOutOfRange { .. })
        ));
    }

    #[test]
    fn init_respects_bounds() {
        let config = ModelConfig::default();
        let scale = InitScale {
            lambda_g: 4.0,
            lambda_h: 8.0,
        };
        let p = DmpnnParams::init(&config, scale, 11);
        let b = (6.0 / 128.0f64).sqrt();
        for k in 1..=3 {
            for name in THETA {
                assert!(p.get(&layer_param(k, name)).max_abs() <= b / 4.0);
            }
            for name in GAMMA {
                assert!(p.get(&layer_param(k, name)).max_abs() <= b / 8.0);
            }
        }
        assert_eq!(p, DmpnnParams::init(&config, scale, 11));
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let config = small_config(3, 2);
        let p = DmpnnParams::init(&config, InitScale::default(), 5);
        let text = p.to_checkpoint_json();
        assert_eq!(DmpnnParams::from_checkpoint_json(&text).unwrap(), p);

        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["tensors"][0]["shape"] = serde_json::json!([7, 7]);
        assert!(matches!(
            DmpnnParams::from_checkpoint_json(&doc.to_string()),
            Err(Error::Checkpoint(_))
        ));
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["format_version"] = serde_json::json!(99);
        assert!(DmpnnParams::from_checkpoint_json(&doc.to_string()).is_err());
    }

    #[test]
    fn oversized_graph_is_rejected() {
        let config = small_config(2, 1);
        let g = Graph::from_parts(1, 1, &[0; 5], &[]).unwrap();
        assert!(matches!(
            GraphTensors::new(&g, &config),
            Err(Error::GraphTooLarge { .. })
        ));
    }
}
