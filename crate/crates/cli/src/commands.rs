use std::path::Path;

use dmpnn_core::bench::bench_layer;
use dmpnn_core::datagen::{
    examples_from_jsonl, examples_to_jsonl, gen_erdos_renyi, gen_hetero, gen_regular,
    gen_standard_patterns, label_pairs, DatasetConfig, DatasetExample,
};
use dmpnn_core::enumerate::{enumerate_connected_graphs, LabelConfig, MAX_ENUMERATION_N};
use dmpnn_core::iso::{count_subgraph_isomorphisms, verify_duality, MatchStats};
use dmpnn_core::line_graph::line_graph;
use dmpnn_core::model::{DmpnnParams, TaskMode};
use dmpnn_core::train::{
    self, evaluate_examples, loss_link_pred, metric_log_jsonl, standard_gradcheck, zero_baseline,
    EvalReport, TrainConfig,
};
use dmpnn_core::Graph;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Exit};
use crate::output::{emit, read_input, sidecar, write_atomic, Meta};
use crate::{BenchArgs, EvalArgs, GenArgs, GradcheckArgs, ModeArg, OracleArgs, Regime};
use crate::{TrainArgs, TransformArgs, VerifyArgs};

/// Largest accepted relative gradient error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

fn resolve_pattern(name_or_path: &str) -> CliResult<Graph> {
    let standard = gen_standard_patterns();
    let index = match name_or_path {
        "3-star" | "star" => Some(0),
        "triangle" => Some(1),
        "tailed-triangle" => Some(2),
        "chordal-cycle" => Some(3),
        _ => None,
    };
    if let Some(i) = index {
        return Ok(standard[i].clone());
    }
    let path = Path::new(name_or_path);
    let text = read_input(path)?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| CliError::input(path, "no graph found"))?;
    serde_json::from_str(line).map_err(|e| CliError::input(path, e))
}

fn dataset_config(with_reversed: bool, timeout_ms: Option<u64>) -> DatasetConfig {
    DatasetConfig {
        with_reversed,
        timeout_ms,
        ..DatasetConfig::default()
    }
}

pub fn gen(args: &GenArgs) -> CliResult<Exit> {
    if args.n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    let pattern = resolve_pattern(&args.pattern)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let m = args.m.unwrap_or(2 * args.n);
    let graphs = (0..args.pairs)
        .map(|_| {
            let seed = rng.next_u64();
            match args.regime {
                Regime::Erdos => gen_erdos_renyi(args.n, args.edge_prob, seed),
                Regime::Regular => gen_regular(args.n, args.degree, seed),
                Regime::Hetero => gen_hetero(args.n, m, args.vertex_labels, args.edge_labels, seed),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<(Graph, Graph)> = graphs.into_iter().map(|g| (pattern.clone(), g)).collect();
    let examples = label_pairs(&pairs, &dataset_config(args.with_reversed, args.timeout_ms))?;
    if examples.len() < pairs.len() {
        eprintln!(
            "dropped {} pairs over the time budget",
            pairs.len() - examples.len()
        );
    }
    write_atomic(&args.output, examples_to_jsonl(&examples).as_bytes())?;
    let meta = Meta::new("gen", Some(args.seed), args);
    meta.write_sidecar(&args.output)?;
    eprintln!(
        "wrote {} examples to {}",
        examples.len(),
        args.output.display()
    );
    emit(&serde_json::json!({ "examples": examples.len(), "meta": meta }));
    Ok(Exit::Success)
}

#[derive(Deserialize)]
struct PairRecord {
    pattern: Graph,
    graph: Graph,
}

fn read_pairs(path: &Path) -> CliResult<Vec<(Graph, Graph)>> {
    read_input(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<PairRecord>(l)
                .map(|r| (r.pattern, r.graph))
                .map_err(|e| CliError::input(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn read_examples(path: &Path) -> CliResult<Vec<DatasetExample>> {
    examples_from_jsonl(&read_input(path)?).map_err(|e| CliError::input(path, e))
}

pub fn oracle(args: &OracleArgs) -> CliResult<Exit> {
    let pairs = read_pairs(&args.input)?;
    let examples = label_pairs(&pairs, &dataset_config(args.with_reversed, args.timeout_ms))?;
    if examples.len() < pairs.len() {
        return Err(CliError::failure(format!(
            "{} pairs exceeded the time budget",
            pairs.len() - examples.len()
        )));
    }
    let mut text = String::new();
    for ex in &examples {
        text.push_str(&serde_json::to_string(&ex.stats).expect("stats serialize"));
        text.push('\n');
    }
    write_atomic(&args.output, text.as_bytes())?;
    let meta = Meta::new("oracle", None, args);
    meta.write_sidecar(&args.output)?;
    eprintln!("labelled {} pairs", examples.len());
    emit(&serde_json::json!({ "pairs": examples.len(), "meta": meta }));
    Ok(Exit::Success)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GraphLine {
    Wrapped { graph: Graph },
    Bare(Graph),
}

#[derive(Serialize)]
struct EdgeMap<'a> {
    graph: usize,
    /// Entry `i` is the line-graph vertex id of edge `i`.
    edge_to_vertex: &'a [usize],
}

pub fn transform(args: &TransformArgs) -> CliResult<Exit> {
    let path = &args.input;
    let mut graphs_out = String::new();
    let mut maps_out = String::new();
    let mut count = 0;
    for (i, line) in read_input(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g = match serde_json::from_str::<GraphLine>(line) {
            Ok(GraphLine::Wrapped { graph }) | Ok(GraphLine::Bare(graph)) => graph,
            Err(e) => return Err(CliError::input(path, format!("line {}: {e}", i + 1))),
        };
        let lg = line_graph(&g)?;
        graphs_out.push_str(&serde_json::to_string(&lg.line_graph).expect("graph serializes"));
        graphs_out.push('\n');
        let map = EdgeMap {
            graph: count,
            edge_to_vertex: &lg.edge_to_vertex,
        };
        maps_out.push_str(&serde_json::to_string(&map).expect("map serializes"));
        maps_out.push('\n');
        count += 1;
    }
    write_atomic(&args.output, graphs_out.as_bytes())?;
    write_atomic(&sidecar(&args.output, ".map.jsonl"), maps_out.as_bytes())?;
    let meta = Meta::new("transform", None, args);
    meta.write_sidecar(&args.output)?;
    emit(&serde_json::json!({ "graphs": count, "meta": meta }));
    Ok(Exit::Success)
}

#[derive(Serialize)]
struct PairCheck {
    line: usize,
    isomorphisms: usize,
    line_isomorphisms: usize,
    dual_injective: bool,
    subgraph_isomorphisms: u64,
    line_subgraph_isomorphisms: u64,
    holds: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    graphs: Vec<[usize; 2]>,
    automorphisms: Vec<usize>,
    c: Vec<Vec<usize>>,
    c_prime: Vec<Vec<usize>>,
    matrices_equal: bool,
    off_diagonal_zero: bool,
    duals_injective: bool,
    pairs: Vec<PairCheck>,
    /// Input lines holding a disconnected graph, where the duality does not apply.
    skipped: Vec<usize>,
    violations: usize,
    meta: Meta,
}

fn check_pair(line: usize, pattern: &Graph, graph: &Graph) -> CliResult<PairCheck> {
    let duality = verify_duality(pattern, graph)?;
    let sub = count_subgraph_isomorphisms(pattern, graph);
    let line_sub = count_subgraph_isomorphisms(
        &line_graph(pattern)?.line_graph,
        &line_graph(graph)?.line_graph,
    );
    Ok(PairCheck {
        line,
        isomorphisms: duality.isomorphisms,
        line_isomorphisms: duality.line_isomorphisms,
        dual_injective: duality.dual_injective,
        subgraph_isomorphisms: sub,
        line_subgraph_isomorphisms: line_sub,
        holds: duality.holds() && sub == line_sub,
    })
}

pub fn verify(args: &VerifyArgs) -> CliResult<Exit> {
    if args.max_n > MAX_ENUMERATION_N {
        return Err(CliError::usage(format!(
            "--max-n {} exceeds the enumeration limit {MAX_ENUMERATION_N}",
            args.max_n
        )));
    }
    let graphs = enumerate_connected_graphs(args.max_n, LabelConfig::unlabeled().with_min_n(2))?;
    let k = graphs.len();
    let mut c = vec![vec![0; k]; k];
    let mut c_prime = vec![vec![0; k]; k];
    let mut duals_injective = true;
    for (i, a) in graphs.iter().enumerate() {
        for (j, b) in graphs.iter().enumerate() {
            let r = verify_duality(a, b)?;
            c[i][j] = r.isomorphisms;
            c_prime[i][j] = r.line_isomorphisms;
            duals_injective &= r.dual_injective;
        }
    }
    let matrices_equal = c == c_prime;
    let off_diagonal_zero = (0..k).all(|i| (0..k).all(|j| i == j || c[i][j] == 0));
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    if let Some(path) = &args.input {
        for (i, (p, g)) in read_pairs(path)?.iter().enumerate() {
            if p.is_connected() && g.is_connected() {
                pairs.push(check_pair(i + 1, p, g)?);
            } else {
                skipped.push(i + 1);
            }
        }
    }
    let violations = usize::from(!matrices_equal)
        + usize::from(!off_diagonal_zero)
        + usize::from(!duals_injective)
        + pairs.iter().filter(|p| !p.holds).count();
    eprintln!(
        "C (graphs) | C' (line graphs), {k} graphs with 2..={} vertices",
        args.max_n
    );
    for i in 0..k {
        let row = |m: &Vec<Vec<usize>>| {
            m[i].iter()
                .map(|v| format!("{v:>3}"))
                .collect::<Vec<_>>()
                .join("")
        };
        eprintln!("{} | {}", row(&c), row(&c_prime));
    }
    for p in pairs.iter().filter(|p| !p.holds) {
        eprintln!(
            "pair {}: |F| = {}, |F'| = {}, subgraph {} vs line {}",
            p.line,
            p.isomorphisms,
            p.line_isomorphisms,
            p.subgraph_isomorphisms,
            p.line_subgraph_isomorphisms
        );
    }
    if !skipped.is_empty() {
        eprintln!("skipped {} disconnected pairs", skipped.len());
    }
    eprintln!("violations: {violations}");
    let report = VerifyReport {
        graphs: graphs.iter().map(|g| [g.n(), g.m()]).collect(),
        automorphisms: (0..k).map(|i| c[i][i]).collect(),
        c,
        c_prime,
        matrices_equal,
        off_diagonal_zero,
        duals_injective,
        pairs,
        skipped,
        violations,
        meta: Meta::new("verify", None, args),
    };
    emit(&report);
    Ok(if violations == 0 {
        Exit::Success
    } else {
        Exit::Failure
    })
}

/// Adds reversed edges where missing and relabels the affected pairs.
fn augment(examples: Vec<DatasetExample>) -> CliResult<Vec<DatasetExample>> {
    examples
        .into_iter()
        .map(|ex| {
            if ex.pattern.is_reversed_augmented() && ex.graph.is_reversed_augmented() {
                return Ok(ex);
            }
            let reversed = |g: &Graph| {
                if g.is_reversed_augmented() {
                    Ok(g.clone())
                } else {
                    g.add_reversed_edges()
                }
            };
            Ok(DatasetExample::labeled(
                reversed(&ex.pattern)?,
                reversed(&ex.graph)?,
            ))
        })
        .collect()
}

fn load_dataset(path: &Path, with_reversed: bool) -> CliResult<Vec<DatasetExample>> {
    let examples = read_examples(path)?;
    if examples.is_empty() {
        return Err(CliError::input(path, "dataset is empty"));
    }
    if with_reversed {
        augment(examples)
    } else {
        Ok(examples)
    }
}

fn train_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => toml::from_str(&read_input(path)?).map_err(|e| CliError::input(path, e))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.k_layers {
        config.k_layers = v;
    }
    if let Some(v) = args.width {
        config.width = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(mode) = args.mode {
        config.mode = match mode {
            ModeArg::CountMatch => TaskMode::CountMatch,
            ModeArg::LinkPred => TaskMode::LinkPred,
        };
    }
    if config.width == 0 || config.batch_size == 0 {
        return Err(CliError::usage("width and batch size must be positive"));
    }
    Ok(config)
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    input: &'a Path,
    with_reversed: bool,
    train: &'a TrainConfig,
}

pub fn train(args: &TrainArgs) -> CliResult<Exit> {
    let config = train_config(args)?;
    let examples = load_dataset(&args.input, args.with_reversed)?;
    let outcome = train::train(&examples, &config)?;
    write_atomic(&args.output, outcome.params.to_checkpoint_json().as_bytes())?;
    write_atomic(
        &sidecar(&args.output, ".metrics.jsonl"),
        metric_log_jsonl(&outcome.log).as_bytes(),
    )?;
    let meta = Meta::new(
        "train",
        Some(config.seed),
        &ResolvedTrain {
            input: &args.input,
            with_reversed: args.with_reversed,
            train: &config,
        },
    );
    meta.write_sidecar(&args.output)?;
    if let (Some(t), Some(z)) = (outcome.test, outcome.test_zero_baseline) {
        eprintln!(
            "test rmse {:.4} (zero {:.4}), mae {:.4}, ged lower bound {:.4} (zero {:.4})",
            t.rmse, z.rmse, t.mae, t.ged_lower_bound, z.ged_lower_bound
        );
    }
    emit(&serde_json::json!({
        "epochs_run": outcome.log.len(),
        "final_loss": outcome.log.last().map(|m| m.loss),
        "split": {
            "train": outcome.split.train.len(),
            "valid": outcome.split.valid.len(),
            "test": outcome.split.test.len(),
        },
        "test": outcome.test,
        "test_zero_baseline": outcome.test_zero_baseline,
        "meta": meta,
    }));
    Ok(Exit::Success)
}

#[derive(Serialize)]
struct EvalOutput {
    examples: usize,
    report: Option<EvalReport>,
    zero_baseline: Option<EvalReport>,
    link_loss: Option<f64>,
    meta: Meta,
}

pub fn eval(args: &EvalArgs) -> CliResult<Exit> {
    let text = read_input(&args.checkpoint)?;
    let params = DmpnnParams::from_checkpoint_json(&text)
        .map_err(|e| CliError::input(&args.checkpoint, e))?;
    let examples = load_dataset(&args.input, args.with_reversed)?;
    let meta = Meta::new("eval", Some(args.seed), args);
    let out = match params.config.mode {
        TaskMode::CountMatch => {
            let truth: Vec<&MatchStats> = examples.iter().map(|e| &e.stats).collect();
            let report = evaluate_examples(&params, &examples)?;
            let zero = zero_baseline(&truth)?;
            eprintln!(
                "rmse {:.4} (zero {:.4}), mae {:.4}, ged lower bound {:.4}",
                report.rmse, zero.rmse, report.mae, report.ged_lower_bound
            );
            EvalOutput {
                examples: examples.len(),
                report: Some(report),
                zero_baseline: Some(zero),
                link_loss: None,
                meta,
            }
        }
        TaskMode::LinkPred => {
            let mut total = 0.0;
            let mut used = 0;
            for ex in examples.iter().filter(|e| e.graph.m() > 0) {
                total += loss_link_pred(&ex.graph, &params, 1, args.seed)?;
                used += 1;
            }
            let loss = if used == 0 {
                None
            } else {
                Some(total / used as f64)
            };
            EvalOutput {
                examples: examples.len(),
                report: None,
                zero_baseline: None,
                link_loss: loss,
                meta,
            }
        }
    };
    emit(&out);
    Ok(Exit::Success)
}

pub fn gradcheck(args: &GradcheckArgs) -> CliResult<Exit> {
    if args.eps.is_nan() || args.eps <= 0.0 || args.width == 0 {
        return Err(CliError::usage("--eps and --width must be positive"));
    }
    let report = standard_gradcheck(args.width, args.eps, args.coords, args.seed)?;
    let max = report.max_rel_error();
    let pass = max <= GRADCHECK_TOLERANCE;
    eprintln!(
        "max relative error {max:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e}): {}",
        if pass { "ok" } else { "FAILED" }
    );
    emit(&serde_json::json!({
        "max_rel_error": max,
        "tolerance": GRADCHECK_TOLERANCE,
        "pass": pass,
        "count_match": report.count_match,
        "link_pred": report.link_pred,
        "meta": Meta::new("gradcheck", Some(args.seed), args),
    }));
    Ok(if pass { Exit::Success } else { Exit::Failure })
}

pub fn bench(args: &BenchArgs) -> CliResult<Exit> {
    if args.sizes.is_empty() || args.sizes.iter().any(|&m| m < 8) || args.width == 0 {
        return Err(CliError::usage(
            "sizes must be at least 8 and width positive",
        ));
    }
    let report = bench_layer(&args.sizes, args.width, args.reps, args.seed)?;
    for p in &report.points {
        eprintln!("m = {:>6}  n = {:>5}  {:.6} s", p.m, p.n, p.seconds);
    }
    eprintln!(
        "R² = {:.4}, last/first = {:.2}",
        report.r_squared, report.ratio
    );
    let meta = Meta::new("bench", Some(args.seed), args);
    let doc = serde_json::json!({ "report": report, "meta": meta });
    if let Some(path) = &args.output {
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        meta.write_sidecar(path)?;
    }
    emit(&doc);
    Ok(Exit::Success)
}
