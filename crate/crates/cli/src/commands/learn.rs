//! `train`, `sweep`, `eval` and `robustness`: everything that fits or
//! scores TransE models.

use latentprobe::bench::{affine_align, perturb_dataset, Perturbation};
use latentprobe::eval::{
    baseline_auc_on, model_auc, precision_at_k, random_baseline_pvalue, BaselineKind, EvalReport, HeldoutPairs,
};
use latentprobe::graph::{
    build_negative_set, parse_edges, split_edges, write_edges, EdgeSplit, HinGraph, IngestOptions, NegativeEdgeSet,
    RelationKind,
};
use latentprobe::transe::{sweep_alpha, train as fit, EmbeddingModel, TrainConfig};
use serde::Serialize;
use serde_json::json;

use super::{graph_inputs, load_graph, load_model, validation, EMBEDDING, TEST_EDGES};
use crate::error::{CliError, CliResult};
use crate::run::{seeds, Run};

/// Model settings with the run's seed and determinism applied.
fn model_config(run: &Run) -> CliResult<TrainConfig> {
    let mut cfg = run.config.train.model.clone();
    cfg.seed = run.seed;
    cfg.deterministic |= run.config.deterministic;
    cfg.validate().map_err(validation)?;
    run.config.train.split.validate().map_err(validation)?;
    Ok(cfg)
}

fn split_and_negatives(run: &Run, graph: &HinGraph, cfg: &TrainConfig) -> CliResult<(EdgeSplit, NegativeEdgeSet)> {
    let split = split_edges(graph, run.config.train.split, run.derive(seeds::SPLIT)).map_err(|e| run.fail(e))?;
    let negs = build_negative_set(&split, cfg.negative_ratio, graph, run.derive(seeds::NEGATIVES))
        .map_err(|e| run.fail(e))?;
    Ok((split, negs))
}

fn fit_on(run: &Run, graph: &HinGraph, cfg: &TrainConfig) -> CliResult<EmbeddingModel> {
    let (split, negs) = split_and_negatives(run, graph, cfg)?;
    Ok(fit(graph, &split, &negs, cfg).map_err(|e| run.fail(e))?.model)
}

pub fn train(run: &Run) -> CliResult<()> {
    let inputs = graph_inputs(run)?;
    let cfg = model_config(run)?;

    run.stage("load");
    let graph = load_graph(run, &inputs)?;

    run.stage("split");
    let (split, negs) = split_and_negatives(run, &graph, &cfg)?;

    run.stage("train");
    let outcome = fit(&graph, &split, &negs, &cfg).map_err(|e| run.fail(e))?;

    run.stage("write");
    run.save_embedding(EMBEDDING, &outcome.model)?;
    let test = graph
        .with_edges(RelationKind::ALL.iter().flat_map(|&r| split.test[r].iter().copied()))
        .map_err(|e| run.fail(e))?;
    write_edges(&test, run.create(TEST_EDGES)?).map_err(|e| run.fail(e))?;
    let sizes = |part: &latentprobe::graph::PerRelation<Vec<_>>| json!({ "Follow": part.follow.len(), "WTF": part.wtf.len() });
    run.write_json(
        "train_report.json",
        &json!({
            "model": cfg,
            "entities": graph.entity_count(),
            "split": { "train": sizes(&split.train), "validation": sizes(&split.validation), "test": sizes(&split.test) },
            "negatives": { "Follow": negs.len(RelationKind::Follow), "WTF": negs.len(RelationKind::Wtf) },
            "trace": outcome.trace,
        }),
    )?;
    if let Some(last) = outcome.trace.last() {
        log::info!("final training loss {:.4}", last.train_loss);
    }
    Ok(())
}

pub fn sweep(run: &Run) -> CliResult<()> {
    let inputs = graph_inputs(run)?;
    let cfg = model_config(run)?;
    let block = &run.config.sweep;
    if block.alphas.is_empty() || block.replicates == 0 {
        return Err(CliError::Validation("sweep needs alphas and at least one replicate".into()));
    }

    run.stage("load");
    let graph = load_graph(run, &inputs)?;
    run.stage("split");
    let (split, negs) = split_and_negatives(run, &graph, &cfg)?;
    run.stage("sweep");
    let table = sweep_alpha(&graph, &split, &negs, &cfg, &block.alphas, block.replicates).map_err(|e| run.fail(e))?;

    run.stage("write");
    let mut w = csv::Writer::from_writer(run.create("sweep.csv")?);
    w.write_record(["alpha", "mean_auc", "std_auc"]).map_err(|e| run.fail(e))?;
    for row in &table.rows {
        w.write_record([row.alpha.to_string(), row.mean_auc.to_string(), row.std_auc.to_string()])
            .map_err(|e| run.fail(e))?;
    }
    w.flush().map_err(|e| run.fail(e))?;
    run.write_json("sweep.json", &table)?;
    log::info!("best alpha {}", table.best_alpha);
    Ok(())
}

#[derive(Serialize)]
struct EvalFile {
    reports: Vec<EvalReport>,
}

pub fn eval(run: &Run) -> CliResult<()> {
    let inputs = graph_inputs(run)?;
    let block = &run.config.eval;
    let emb_path = run.input(block.embedding.as_ref(), EMBEDDING, "embedding")?;
    let test_path = run.input(block.test_edges.as_ref(), TEST_EDGES, "held-out edge")?;
    if block.k == 0 || block.pool_size < block.k || block.n_perm == 0 {
        return Err(CliError::Validation("eval needs pool_size >= k >= 1 and n_perm >= 1".into()));
    }

    run.stage("load");
    let graph = load_graph(run, &inputs)?;
    let model = load_model(run, &emb_path, Some(&graph))?;
    let options = IngestOptions {
        wtf_supersedes_follow: false,
        registry: Some(graph.names().to_vec()),
        ..Default::default()
    };
    let test = parse_edges(std::io::BufReader::new(run.open(&test_path)?), &options)
        .map_err(|e| run.fail(e))?
        .0;
    let positives: Vec<_> = test.edges(RelationKind::Wtf).collect();

    run.stage("auc");
    let pairs = HeldoutPairs::sample(&graph, &positives, run.derive(seeds::PAIRS)).map_err(|e| run.fail(e))?;
    let skipped = positives.len() - pairs.len();
    let report = |metric: &str, value: f64, n_cases: usize, skipped: usize| EvalReport {
        metric: metric.to_string(),
        value,
        n_cases,
        skipped,
        seed: run.seed,
        config_hash: run.hash.clone(),
    };
    let mut reports = vec![report("auc", model_auc(&model, &pairs).map_err(|e| run.fail(e))?, pairs.len(), skipped)];
    for kind in BaselineKind::ALL {
        let auc = baseline_auc_on(&graph, &pairs, kind, run.derive(seeds::BASELINE)).map_err(|e| run.fail(e))?;
        reports.push(report(&format!("baseline_auc_{kind:?}"), auc, pairs.len(), skipped));
    }

    run.stage("random-baseline");
    let scored = pairs.scored(|e| model.score(e)).map_err(|e| run.fail(e))?;
    let p = random_baseline_pvalue(&scored, block.n_perm, run.derive(seeds::PERMUTATION)).map_err(|e| run.fail(e))?;
    reports.push(report("random_baseline_p", p, pairs.len(), skipped));

    run.stage("precision");
    let prec = precision_at_k(&model, &positives, &graph, block.pool_size, block.k, run.derive(seeds::PRECISION))
        .map_err(|e| run.fail(e))?;
    reports.push(report(&format!("precision_at_{}", block.k), prec.value, prec.n_cases, prec.skipped));

    run.stage("write");
    for r in &reports {
        log::info!("{} = {:.4}", r.metric, r.value);
    }
    run.write_json("eval_report.json", &EvalFile { reports })
}

#[derive(Serialize)]
struct RobustnessRow {
    kind: Perturbation,
    magnitude: f64,
    /// What was aligned: the perturbed model against the reference, or the
    /// two halves against each other.
    comparison: &'static str,
    r2: f64,
    cosine_mean: f64,
    cosine_q025: f64,
    cosine_q975: f64,
}

pub fn robustness(run: &Run) -> CliResult<()> {
    let inputs = graph_inputs(run)?;
    let cfg = model_config(run)?;
    let block = &run.config.robustness;
    if let Some(bad) = block.perturbations.iter().find(|p| !(0.0..=1.0).contains(&p.magnitude)) {
        return Err(CliError::Validation(format!("perturbation magnitude {} outside [0, 1]", bad.magnitude)));
    }
    let reference_path = run.optional_input(block.reference.as_ref(), EMBEDDING, "reference embedding")?;

    run.stage("load");
    let graph = load_graph(run, &inputs)?;
    let reference = match reference_path {
        Some(p) => load_model(run, &p, Some(&graph))?,
        None => {
            run.stage("reference");
            fit_on(run, &graph, &cfg)?
        }
    };
    let reference_phi = reference.entity_matrix();

    let mut rows = Vec::new();
    for (i, p) in block.perturbations.iter().enumerate() {
        run.stage(&format!("perturb {:?} {}", p.kind, p.magnitude));
        let seed = latentprobe::rng::derive(run.derive(seeds::PERTURB), i as u64);
        let graphs = perturb_dataset(&graph, p.kind, p.magnitude, seed).map_err(|e| run.fail(e))?;
        let models = graphs
            .iter()
            .map(|g| fit_on(run, g, &cfg))
            .collect::<CliResult<Vec<_>>>()?;
        let (a, b, comparison) = match models.as_slice() {
            [one] => (reference_phi.clone(), one.entity_matrix(), "reference"),
            [x, y] => (x.entity_matrix(), y.entity_matrix(), "halves"),
            _ => unreachable!("perturbations yield one or two graphs"),
        };
        let al = affine_align(&a, &b).map_err(|e| run.fail(e))?;
        log::info!("{:?} {}: r2 {:.4}", p.kind, p.magnitude, al.r2);
        rows.push(RobustnessRow {
            kind: p.kind,
            magnitude: p.magnitude,
            comparison,
            r2: al.r2,
            cosine_mean: al.cosine_mean,
            cosine_q025: al.cosine_q025,
            cosine_q975: al.cosine_q975,
        });
    }

    run.stage("write");
    let mut w = csv::Writer::from_writer(run.create("robustness.csv")?);
    for row in &rows {
        w.serialize(row).map_err(|e| run.fail(e))?;
    }
    w.flush().map_err(|e| run.fail(e))?;
    run.write_json("robustness.json", &json!({ "model": cfg, "rows": rows }))
}
