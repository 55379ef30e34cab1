//! Objectives, optimizer, gradient checking, evaluation and the training loop.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::DatasetExample;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::iso::MatchStats;
use crate::linalg::DenseMatrix;
use crate::model::{
    distmult_scores, encode_graph, forward, predict, predict_count, predict_node, DmpnnParams,
    GraphTensors, InitScale, ModelConfig, ParamVars, Prediction, TaskMode,
};
use crate::tape::{Gradients, Tape, Var};

/// Model inputs and ground truth of one (pattern, graph) example.
#[derive(Clone, Debug)]
pub struct LabeledPair {
    pub pattern: GraphTensors,
    pub graph: GraphTensors,
    pub stats: MatchStats,
}

impl LabeledPair {
    pub fn new(example: &DatasetExample, config: &ModelConfig) -> Result<Self> {
        Ok(Self {
            pattern: GraphTensors::new(&example.pattern, config)?,
            graph: GraphTensors::new(&example.graph, config)?,
            stats: example.stats.clone(),
        })
    }
}

pub fn prepare_pairs(
    examples: &[DatasetExample],
    config: &ModelConfig,
) -> Result<Vec<LabeledPair>> {
    examples
        .par_iter()
        .map(|ex| LabeledPair::new(ex, config))
        .collect()
}

fn column(values: impl Iterator<Item = f64>) -> DenseMatrix {
    let data: Vec<f64> = values.collect();
    DenseMatrix::from_vec(data.len(), 1, data).expect("finite targets")
}

/// Mean over the batch of `(ĉ − c)² + node_weight · Σ_v (ŵ_v − w_v)²`.
pub fn count_match_loss_var(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    batch: &[&LabeledPair],
    node_weight: f64,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total: Option<Var> = None;
    for item in batch {
        let out = forward(tape, pv, config, &item.pattern, &item.graph)?;
        let c_hat = predict_count(tape, pv, out.graph.pooled, out.pattern.pooled)?;
        let c = tape.constant(DenseMatrix::filled(1, 1, item.stats.count as f64));
        let dc = tape.sub(c_hat, c)?;
        let sq = tape.hadamard(dc, dc)?;
        let mut term = tape.sum_all(sq);
        if node_weight != 0.0 {
            let w_hat = predict_node(tape, pv, out.graph.h, out.pattern.pooled)?;
            let w = tape.constant(column(item.stats.node_freq.iter().map(|&f| f as f64)));
            let dw = tape.sub(w_hat, w)?;
            let sq = tape.hadamard(dw, dw)?;
            let node = tape.sum_all(sq);
            let node = tape.scale(node, node_weight);
            term = tape.add(term, node)?;
        }
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64))
}

/// A loss value with its gradients and the ReLU pattern it was computed on.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub loss: f64,
    pub grads: Gradients,
    pub relu_pattern: Vec<bool>,
}

impl LossEval {
    fn from_tape(tape: &Tape, loss: Var) -> Result<Self> {
        Ok(Self {
            loss: tape.value(loss).get(0, 0),
            grads: tape.backward(loss)?,
            relu_pattern: tape.relu_pattern(),
        })
    }
}

pub fn eval_count_match(
    params: &DmpnnParams,
    batch: &[&LabeledPair],
    node_weight: f64,
) -> Result<LossEval> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let loss = count_match_loss_var(&mut tape, &pv, &params.config, batch, node_weight)?;
    LossEval::from_tape(&tape, loss)
}

pub fn loss_and_grad_count_match(
    params: &DmpnnParams,
    batch: &[&LabeledPair],
    node_weight: f64,
) -> Result<(f64, Gradients)> {
    eval_count_match(params, batch, node_weight).map(|e| (e.loss, e.grads))
}

/// Counting plus matching loss of `examples` under `params`.
pub fn loss_count_match(params: &DmpnnParams, examples: &[DatasetExample]) -> Result<f64> {
    let pairs = prepare_pairs(examples, &params.config)?;
    let refs: Vec<&LabeledPair> = pairs.iter().collect();
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let loss = count_match_loss_var(&mut tape, &pv, &params.config, &refs, 1.0)?;
    Ok(tape.value(loss).get(0, 0))
}

/// `(head, relation, tail)` index columns.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Triplets {
    pub heads: Vec<usize>,
    pub relations: Vec<usize>,
    pub tails: Vec<usize>,
}

impl Triplets {
    /// One triplet per (edge, label) of `g`.
    pub fn of_graph(g: &Graph) -> Self {
        let mut t = Self::default();
        for e in g.edges() {
            for l in e.labels.iter() {
                t.heads.push(e.source);
                t.relations.push(l as usize);
                t.tails.push(e.target);
            }
        }
        t
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// `per_positive` corruptions of every triplet; each replaces the head or
    /// the tail (fair coin) with a uniformly drawn vertex.
    pub fn corrupt(&self, n: usize, per_positive: usize, rng: &mut impl Rng) -> Self {
        let mut t = Self::default();
        for i in 0..self.len() {
            for _ in 0..per_positive {
                let (mut h, mut tl) = (self.heads[i], self.tails[i]);
                if rng.gen_bool(0.5) {
                    h = rng.gen_range(0..n);
                } else {
                    tl = rng.gen_range(0..n);
                }
                t.heads.push(h);
                t.relations.push(self.relations[i]);
                t.tails.push(tl);
            }
        }
        t
    }
}

fn scores(tape: &mut Tape, pv: &ParamVars, h: Var, t: &Triplets) -> Result<Var> {
    distmult_scores(
        tape,
        pv,
        h,
        Arc::new(t.heads.clone()),
        Arc::new(t.relations.clone()),
        Arc::new(t.tails.clone()),
    )
}

/// `mean over triplets of −log σ(s) − (1/T) Σ log(1 − σ(s⁻))`.
pub fn link_pred_loss_var(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    gt: &GraphTensors,
    positives: &Triplets,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<Var> {
    if positives.is_empty() {
        return Err(Error::NoEdges);
    }
    if let Some(&r) = positives
        .relations
        .iter()
        .find(|&&r| r >= config.n_edge_labels as usize)
    {
        return Err(Error::RelationOutOfRange {
            relation: r,
            n_relations: config.n_edge_labels as usize,
        });
    }
    let t = negatives_per_positive.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negatives = positives.corrupt(gt.n, t, &mut rng);
    let enc = encode_graph(tape, pv, config, gt)?;
    let pos = scores(tape, pv, enc.h, positives)?;
    let neg = scores(tape, pv, enc.h, &negatives)?;
    let pos_ll = tape.log_sigmoid(pos);
    let pos_sum = tape.sum_all(pos_ll);
    let flipped = tape.scale(neg, -1.0);
    let neg_ll = tape.log_sigmoid(flipped);
    let neg_sum = tape.sum_all(neg_ll);
    let neg_sum = tape.scale(neg_sum, 1.0 / t as f64);
    let ll = tape.add(pos_sum, neg_sum)?;
    Ok(tape.scale(ll, -1.0 / positives.len() as f64))
}

pub fn loss_and_grad_link_pred(
    graph: &Graph,
    params: &DmpnnParams,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<(f64, Gradients)> {
    eval_link_pred(graph, params, negatives_per_positive, seed).map(|e| (e.loss, e.grads))
}

pub fn eval_link_pred(
    graph: &Graph,
    params: &DmpnnParams,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<LossEval> {
    let gt = GraphTensors::new(graph, &params.config)?;
    let positives = Triplets::of_graph(graph);
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let loss = link_pred_loss_var(
        &mut tape,
        &pv,
        &params.config,
        &gt,
        &positives,
        negatives_per_positive,
        seed,
    )?;
    LossEval::from_tape(&tape, loss)
}

pub fn loss_link_pred(
    graph: &Graph,
    params: &DmpnnParams,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<f64> {
    loss_and_grad_link_pred(graph, params, negatives_per_positive, seed).map(|(l, _)| l)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub t: u64,
    m: BTreeMap<String, DenseMatrix>,
    v: BTreeMap<String, DenseMatrix>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// `w ← w·(1 − lr·λ)`, then `w ← w − lr·m̂/(√v̂ + ε)`.
    pub fn step(&mut self, params: &mut DmpnnParams, grads: &Gradients) -> Result<()> {
        let AdamWConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (name, w) in params.tensors.iter_mut() {
            let zero = DenseMatrix::zeros(w.rows(), w.cols());
            let g = grads.get(name).unwrap_or(&zero);
            if g.shape() != w.shape() {
                return Err(Error::DimensionMismatch {
                    op: "adamw",
                    left: w.shape(),
                    right: g.shape(),
                });
            }
            let m = self.m.entry(name.clone()).or_insert_with(|| zero.clone());
            let v = self.v.entry(name.clone()).or_insert_with(|| zero.clone());
            let ws = w.as_mut_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for (i, &gi) in g.as_slice().iter().enumerate() {
                ms[i] = beta1 * ms[i] + (1.0 - beta1) * gi;
                vs[i] = beta2 * vs[i] + (1.0 - beta2) * gi * gi;
                let m_hat = ms[i] / c1;
                let v_hat = vs[i] / c2;
                ws[i] *= 1.0 - lr * weight_decay;
                ws[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Relative error floor: below this magnitude both gradients count as zero.
pub const GRADCHECK_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Coordinates compared.
    pub coordinates: usize,
    /// Sampled coordinates skipped because the `±ε` probes sit on different
    /// ReLU pieces, where the loss has no derivative to compare against.
    pub kinks_skipped: usize,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares analytic gradients against central differences
/// `(f(x+ε) − f(x−ε)) / 2ε` on up to `n_coords` seeded coordinates.
/// Relative error is `|a − n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
/// Coordinates whose probes change the ReLU pattern are skipped and counted.
pub fn gradcheck(
    params: &DmpnnParams,
    loss: &dyn Fn(&DmpnnParams) -> Result<LossEval>,
    eps: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    let base = loss(params)?;
    let grads = &base.grads;
    let coords: Vec<(String, usize)> = params
        .tensors
        .iter()
        .flat_map(|(name, t)| (0..t.len()).map(move |i| (name.clone(), i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<&(String, usize)> = if coords.len() <= n_coords {
        coords.iter().collect()
    } else {
        let mut picked = rand::seq::index::sample(&mut rng, coords.len(), n_coords).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| &coords[i]).collect()
    };
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        coordinates: 0,
        kinks_skipped: 0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = params.clone();
    for (name, i) in chosen {
        let original = params.get(name).as_slice()[*i];
        probe.get_mut(name).as_mut_slice()[*i] = original + eps;
        let hi = loss(&probe)?;
        probe.get_mut(name).as_mut_slice()[*i] = original - eps;
        let lo = loss(&probe)?;
        probe.get_mut(name).as_mut_slice()[*i] = original;
        if hi.relu_pattern != base.relu_pattern || lo.relu_pattern != base.relu_pattern {
            report.kinks_skipped += 1;
            continue;
        }
        report.coordinates += 1;
        let numeric = (hi.loss - lo.loss) / (2.0 * eps);
        let analytic = grads[name].as_slice()[*i];
        let rel =
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        if rel > report.max_rel_error || report.worst_param.is_empty() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst_param = name.clone();
            report.worst_index = *i;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Fixed labelled pair used by the standard gradient check: a triangle
/// pattern inside a six-vertex graph holding two triangles.
pub fn gradcheck_fixture() -> Result<DatasetExample> {
    let pattern = Graph::symmetric(3, &[(0, 1), (1, 2), (2, 0)])?.add_reversed_edges()?;
    let graph = Graph::symmetric(
        6,
        &[
            (0, 1),
            (1, 2),
            (2, 0),
            (2, 3),
            (3, 4),
            (4, 5),
            (5, 3),
            (0, 5),
            (1, 4),
        ],
    )?
    .add_reversed_edges()?;
    Ok(DatasetExample::labeled(pattern, graph))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StandardGradcheck {
    pub count_match: GradcheckReport,
    pub link_pred: GradcheckReport,
}

impl StandardGradcheck {
    pub fn max_rel_error(&self) -> f64 {
        self.count_match
            .max_rel_error
            .max(self.link_pred.max_rel_error)
    }
}

/// Gradient check of both losses on [`gradcheck_fixture`] with freshly
/// initialised parameters of the given width.
pub fn standard_gradcheck(
    width: usize,
    eps: f64,
    n_coords: usize,
    seed: u64,
) -> Result<StandardGradcheck> {
    let example = gradcheck_fixture()?;
    let examples = std::slice::from_ref(&example);
    let scale = InitScale::from_graphs([&example.pattern, &example.graph]);
    let base = TrainConfig {
        width,
        ..TrainConfig::default()
    };
    let cm_config = base.model_config(examples);
    let cm_params = DmpnnParams::init(&cm_config, scale, seed);
    let pair = LabeledPair::new(&example, &cm_config)?;
    let count_match = gradcheck(
        &cm_params,
        &|p| eval_count_match(p, &[&pair], 1.0),
        eps,
        n_coords,
        seed,
    )?;
    let lp_config = ModelConfig {
        mode: TaskMode::LinkPred,
        ..cm_config.clone()
    };
    let lp_params = DmpnnParams::init(&lp_config, scale, seed);
    let link_pred = gradcheck(
        &lp_params,
        &|p| eval_link_pred(&example.graph, p, 1, seed),
        eps,
        n_coords,
        seed,
    )?;
    Ok(StandardGradcheck {
        count_match,
        link_pred,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub ged_lower_bound: f64,
}

/// Errors of clamped predictions against ground truth. The GED lower bound
/// is the per-pair mean absolute node-frequency error, averaged over pairs.
pub fn report_from(predictions: &[Prediction], truth: &[&MatchStats]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = predictions.len() as f64;
    let (mut se, mut ae, mut ged) = (0.0, 0.0, 0.0);
    for (p, t) in predictions.iter().zip(truth) {
        let d = p.count.max(0.0) - t.count as f64;
        se += d * d;
        ae += d.abs();
        if !t.node_freq.is_empty() {
            let node: f64 = p
                .node
                .iter()
                .zip(&t.node_freq)
                .map(|(w, &f)| (w.max(0.0) - f as f64).abs())
                .sum();
            ged += node / t.node_freq.len() as f64;
        }
    }
    Ok(EvalReport {
        rmse: (se / k).sqrt(),
        mae: ae / k,
        ged_lower_bound: ged / k,
    })
}

pub fn evaluate(params: &DmpnnParams, pairs: &[&LabeledPair]) -> Result<EvalReport> {
    let predictions: Vec<Prediction> = pairs
        .par_iter()
        .map(|p| predict(params, &p.pattern, &p.graph))
        .collect::<Result<_>>()?;
    let truth: Vec<&MatchStats> = pairs.iter().map(|p| &p.stats).collect();
    report_from(&predictions, &truth)
}

pub fn evaluate_examples(params: &DmpnnParams, examples: &[DatasetExample]) -> Result<EvalReport> {
    let pairs = prepare_pairs(examples, &params.config)?;
    let refs: Vec<&LabeledPair> = pairs.iter().collect();
    evaluate(params, &refs)
}

/// Report of the predictor that always outputs zero.
pub fn zero_baseline(truth: &[&MatchStats]) -> Result<EvalReport> {
    let predictions: Vec<Prediction> = truth
        .iter()
        .map(|t| Prediction {
            count: 0.0,
            node: vec![0.0; t.node_freq.len()],
        })
        .collect();
    report_from(&predictions, truth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub k_layers: usize,
    pub width: usize,
    pub activation: bool,
    pub vertex_ids: bool,
    pub mode: TaskMode,
    /// Weight of the matching term; 0 trains counting alone.
    pub node_loss_weight: f64,
    /// Negatives per positive triplet in link prediction.
    pub negatives: usize,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            batch_size: 16,
            optimizer: AdamWConfig::default(),
            k_layers: 3,
            width: 64,
            activation: true,
            vertex_ids: true,
            mode: TaskMode::CountMatch,
            node_loss_weight: 1.0,
            negatives: 1,
            train_fraction: 0.7,
            valid_fraction: 0.1,
            patience: None,
        }
    }
}

impl TrainConfig {
    /// Model shape covering every pattern and graph in `examples`.
    pub fn model_config(&self, examples: &[DatasetExample]) -> ModelConfig {
        let graphs = examples.iter().flat_map(|e| [&e.pattern, &e.graph]);
        let (mut max_n, mut nvl, mut nel) = (1, 1, 1);
        for g in graphs {
            max_n = max_n.max(g.n());
            nvl = nvl.max(g.n_vertex_labels());
            nel = nel.max(g.n_edge_labels());
        }
        ModelConfig {
            max_n,
            n_vertex_labels: nvl,
            n_edge_labels: nel,
            k_layers: self.k_layers,
            width: self.width,
            activation: self.activation,
            vertex_ids: self.vertex_ids,
            mode: self.mode,
        }
    }
}

/// One metric-log line. Count metrics are null in link-prediction mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub ged_lb: Option<f64>,
}

pub fn metric_log_jsonl(log: &[EpochMetrics]) -> String {
    log.iter()
        .map(|m| serde_json::to_string(m).expect("metrics serialize") + "\n")
        .collect()
}

/// Index split after a seeded shuffle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn new(n: usize, train_fraction: f64, valid_fraction: f64, rng: &mut impl Rng) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let n_train = ((n as f64 * train_fraction).round() as usize).min(n);
        let n_valid = ((n as f64 * valid_fraction).round() as usize).min(n - n_train);
        let valid = idx[n_train..n_train + n_valid].to_vec();
        let test = idx[n_train + n_valid..].to_vec();
        idx.truncate(n_train);
        Self {
            train: idx,
            valid,
            test,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: DmpnnParams,
    pub log: Vec<EpochMetrics>,
    pub split: Split,
    /// Test-set report of the returned parameters (count-match mode).
    pub test: Option<EvalReport>,
    pub test_zero_baseline: Option<EvalReport>,
}

/// Trains a fresh model on `examples`. Deterministic for a fixed config.
pub fn train(examples: &[DatasetExample], config: &TrainConfig) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(Error::Precondition("batch size must be positive".into()));
    }
    let model_config = config.model_config(examples);
    let scale = InitScale::from_graphs(examples.iter().flat_map(|e| [&e.pattern, &e.graph]));
    let params = DmpnnParams::init(&model_config, scale, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let split = Split::new(
        examples.len(),
        config.train_fraction,
        config.valid_fraction,
        &mut rng,
    );
    match config.mode {
        TaskMode::CountMatch => train_count_match(examples, config, params, split, rng),
        TaskMode::LinkPred => train_link_pred(examples, config, params, split, rng),
    }
}

fn train_count_match(
    examples: &[DatasetExample],
    config: &TrainConfig,
    mut params: DmpnnParams,
    split: Split,
    mut rng: ChaCha8Rng,
) -> Result<TrainOutcome> {
    let pairs = prepare_pairs(examples, &params.config)?;
    let select = |idx: &[usize]| -> Vec<&LabeledPair> { idx.iter().map(|&i| &pairs[i]).collect() };
    let monitor = if split.valid.is_empty() {
        select(&split.train)
    } else {
        select(&split.valid)
    };
    let mut optimizer = AdamW::new(config.optimizer);
    let mut order = split.train.clone();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, DmpnnParams)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = select(chunk);
            let (loss, grads) =
                loss_and_grad_count_match(&params, &batch, config.node_loss_weight)?;
            optimizer.step(&mut params, &grads)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let loss = if order.is_empty() {
            0.0
        } else {
            loss_sum / order.len() as f64
        };
        let report = if monitor.is_empty() {
            None
        } else {
            Some(evaluate(&params, &monitor)?)
        };
        log.push(EpochMetrics {
            epoch,
            loss,
            rmse: report.map(|r| r.rmse),
            mae: report.map(|r| r.mae),
            ged_lb: report.map(|r| r.ged_lower_bound),
        });
        log::info!("epoch {epoch}: loss {loss:.6}");
        if let (Some(patience), Some(r)) = (config.patience, report) {
            if best.as_ref().is_none_or(|(b, _)| r.rmse < *b) {
                best = Some((r.rmse, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, p)) = best {
        params = p;
    }
    let test_pairs = select(&split.test);
    let (test, test_zero_baseline) = if test_pairs.is_empty() {
        (None, None)
    } else {
        let truth: Vec<&MatchStats> = test_pairs.iter().map(|p| &p.stats).collect();
        (
            Some(evaluate(&params, &test_pairs)?),
            Some(zero_baseline(&truth)?),
        )
    };
    Ok(TrainOutcome {
        params,
        log,
        split,
        test,
        test_zero_baseline,
    })
}

fn train_link_pred(
    examples: &[DatasetExample],
    config: &TrainConfig,
    mut params: DmpnnParams,
    split: Split,
    mut rng: ChaCha8Rng,
) -> Result<TrainOutcome> {
    let prepared: Vec<(GraphTensors, Triplets)> = examples
        .iter()
        .map(|e| {
            Ok((
                GraphTensors::new(&e.graph, &params.config)?,
                Triplets::of_graph(&e.graph),
            ))
        })
        .collect::<Result<_>>()?;
    let usable = |idx: &[usize]| -> Vec<usize> {
        idx.iter()
            .copied()
            .filter(|&i| !prepared[i].1.is_empty())
            .collect()
    };
    let mut order = usable(&split.train);
    let monitor = usable(&split.valid);
    let mut optimizer = AdamW::new(config.optimizer);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let seed = rng.next_u64();
            let mut tape = Tape::new();
            let pv = params.register(&mut tape);
            let mut total: Option<Var> = None;
            for (j, &i) in chunk.iter().enumerate() {
                let (gt, pos) = &prepared[i];
                let l = link_pred_loss_var(
                    &mut tape,
                    &pv,
                    &params.config,
                    gt,
                    pos,
                    config.negatives,
                    seed.wrapping_add(j as u64),
                )?;
                total = Some(match total {
                    Some(t) => tape.add(t, l)?,
                    None => l,
                });
            }
            let loss = tape.scale(total.expect("non-empty chunk"), 1.0 / chunk.len() as f64);
            let grads = tape.backward(loss)?;
            optimizer.step(&mut params, &grads)?;
            loss_sum += tape.value(loss).get(0, 0) * chunk.len() as f64;
        }
        let train_loss = if order.is_empty() {
            0.0
        } else {
            loss_sum / order.len() as f64
        };
        let loss = if monitor.is_empty() {
            train_loss
        } else {
            let mut sum = 0.0;
            for &i in &monitor {
                let (gt, pos) = &prepared[i];
                let mut tape = Tape::new();
                let pv = params.register(&mut tape);
                let l = link_pred_loss_var(
                    &mut tape,
                    &pv,
                    &params.config,
                    gt,
                    pos,
                    config.negatives,
                    config.seed ^ i as u64,
                )?;
                sum += tape.value(l).get(0, 0);
            }
            sum / monitor.len() as f64
        };
        log.push(EpochMetrics {
            epoch,
            loss,
            rmse: None,
            mae: None,
            ged_lb: None,
        });
        log::info!("epoch {epoch}: loss {loss:.6}");
    }
    Ok(TrainOutcome {
        params,
        log,
        split,
        test: None,
        test_zero_baseline: None,
    })
}
