use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{loss, relation_weight, score_derivative};
use super::{init_embeddings, score_rows, EmbeddingModel, TrainConfig};
use crate::error::{invalid, Error, Result};
use crate::eval::{model_auc, HeldoutPairs};
use crate::graph::{negatives_for, Edge, EdgeSplit, HinGraph, NegativeEdgeSet, RelationKind};
use crate::rng::{self, stream};
use crate::stats::{mean, sample_std};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation split lacks a weighted relation.
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub trace: Vec<EpochStats>,
}

/// Adagrad state and scratch space for sparse row updates.
struct Optimizer {
    dim: usize,
    lr: f64,
    acc_entities: Vec<f64>,
    acc_relations: [Vec<f64>; 2],
    grad: Vec<f64>,
    grad_relations: [Vec<f64>; 2],
    touched: Vec<u32>,
    marked: Vec<bool>,
}

impl Optimizer {
    fn new(n: usize, config: &TrainConfig) -> Self {
        let d = config.dim;
        Optimizer {
            dim: d,
            lr: config.learning_rate,
            acc_entities: vec![config.accumulator_init; n * d],
            acc_relations: [vec![config.accumulator_init; d], vec![config.accumulator_init; d]],
            grad: vec![0.0; n * d],
            grad_relations: [vec![0.0; d], vec![0.0; d]],
            touched: Vec::new(),
            marked: vec![false; n],
        }
    }

    fn touch(&mut self, row: usize) {
        if !self.marked[row] {
            self.marked[row] = true;
            self.touched.push(row as u32);
        }
    }

    /// Accumulates the gradient of one term into the scratch buffers.
    fn add_term(&mut self, model: &EmbeddingModel, edge: &Edge, positive: bool, weight: f64) {
        let d = self.dim;
        let r = model.relation(edge.relation).expect("model carries every relation");
        let s = model.row(edge.source);
        let t = model.row(edge.target);
        let g = score_derivative(score_rows(s, r, t), positive, weight);
        let (si, ti) = (edge.source.index() * d, edge.target.index() * d);
        let gr = &mut self.grad_relations[edge.relation.index()];
        for j in 0..d {
            self.grad[si + j] += g * t[j];
            self.grad[ti + j] += g * (s[j] + r[j]);
            gr[j] += g * t[j];
        }
        self.touch(edge.source.index());
        self.touch(edge.target.index());
    }

    fn add_shard(&mut self, shard: ShardGradient) {
        for (row, g) in shard.rows {
            let base = row as usize * self.dim;
            for (acc, x) in self.grad[base..base + self.dim].iter_mut().zip(&g) {
                *acc += x;
            }
            self.touch(row as usize);
        }
        for (k, g) in shard.relations.into_iter().enumerate() {
            for (acc, x) in self.grad_relations[k].iter_mut().zip(g) {
                *acc += x;
            }
        }
    }

    /// Applies the Adagrad step to touched rows and clears the scratch.
    fn apply(&mut self, model: &mut EmbeddingModel) {
        let (d, lr) = (self.dim, self.lr);
        self.touched.sort_unstable();
        for &row in &self.touched {
            let base = row as usize * d;
            let params = model.row_mut((row as usize).into());
            for j in 0..d {
                let g = self.grad[base + j];
                let acc = &mut self.acc_entities[base + j];
                *acc += g * g;
                params[j] -= lr * g / acc.sqrt();
                self.grad[base + j] = 0.0;
            }
            self.marked[row as usize] = false;
        }
        self.touched.clear();
        for r in RelationKind::ALL {
            let k = r.index();
            if let Some(params) = model.relation_mut(r) {
                for j in 0..d {
                    let g = self.grad_relations[k][j];
                    if g == 0.0 {
                        continue;
                    }
                    self.acc_relations[k][j] += g * g;
                    params[j] -= lr * g / self.acc_relations[k][j].sqrt();
                }
            }
            self.grad_relations[k].fill(0.0);
        }
    }
}

/// Gradient of one batch shard, computed without shared state.
struct ShardGradient {
    rows: HashMap<u32, Vec<f64>>,
    relations: [Vec<f64>; 2],
}

fn shard_gradient(model: &EmbeddingModel, items: &[Item]) -> ShardGradient {
    let d = model.dim();
    let mut rows: HashMap<u32, Vec<f64>> = HashMap::new();
    let mut relations = [vec![0.0; d], vec![0.0; d]];
    for it in items {
        let r = model.relation(it.edge.relation).expect("model carries every relation");
        let s = model.row(it.edge.source);
        let t = model.row(it.edge.target);
        let g = score_derivative(score_rows(s, r, t), it.positive, it.weight);
        let gs = rows.entry(it.edge.source.0).or_insert_with(|| vec![0.0; d]);
        for j in 0..d {
            gs[j] += g * t[j];
        }
        let gt = rows.entry(it.edge.target.0).or_insert_with(|| vec![0.0; d]);
        for j in 0..d {
            gt[j] += g * (s[j] + r[j]);
        }
        let gr = &mut relations[it.edge.relation.index()];
        for j in 0..d {
            gr[j] += g * t[j];
        }
    }
    ShardGradient { rows, relations }
}

#[derive(Copy, Clone, Debug)]
struct Item {
    edge: Edge,
    positive: bool,
    weight: f64,
}

fn items(split: &EdgeSplit, negatives: &NegativeEdgeSet, alpha: f64) -> Vec<Item> {
    let mut out = Vec::new();
    for r in RelationKind::ALL {
        let weight = relation_weight(r, alpha);
        if weight == 0.0 {
            continue;
        }
        out.extend(split.train[r].iter().map(|&edge| Item {
            edge,
            positive: true,
            weight,
        }));
        out.extend(negatives.edges_of(r).map(|edge| Item {
            edge,
            positive: false,
            weight,
        }));
    }
    out
}

/// Mini-batch Adagrad over the shuffled positive and negative training
/// edges. Relations with zero weight take no part in training.
pub fn train(
    graph: &HinGraph,
    split: &EdgeSplit,
    negatives: &NegativeEdgeSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    for r in RelationKind::ALL {
        if relation_weight(r, config.alpha) > 0.0 && split.train[r].is_empty() {
            return Err(invalid(format!("no {r} training edges but the relation has nonzero weight")));
        }
    }
    let n = graph.entity_count();
    let in_range = |e: &Edge| e.source.index() < n && e.target.index() < n;
    if !RelationKind::ALL
        .iter()
        .all(|&r| split.train[r].iter().all(in_range) && negatives.edges_of(r).all(|e| in_range(&e)))
    {
        return Err(invalid("training edges reference entities outside the graph"));
    }

    let mut model = init_embeddings(n, &RelationKind::ALL, config)?;
    let validation_negatives = negatives_for(
        &split.validation,
        config.negative_ratio,
        graph,
        rng::derive(config.seed, stream::VALIDATION),
    )?;
    let validation_usable = RelationKind::ALL
        .iter()
        .all(|&r| relation_weight(r, config.alpha) == 0.0 || !split.validation[r].is_empty());

    let mut optimizer = Optimizer::new(n, config);
    let mut current_negatives = negatives.clone();
    let mut batch_items = items(split, &current_negatives, config.alpha);
    let threads = if config.deterministic {
        1
    } else {
        rayon::current_num_threads().max(1)
    };
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        if config.resample_negatives && epoch > 1 {
            current_negatives = negatives_for(
                &split.train,
                config.negative_ratio,
                graph,
                rng::derive(config.seed, epoch as u64),
            )?;
            batch_items = items(split, &current_negatives, config.alpha);
        }
        let mut rng = rng::seeded(rng::derive(config.seed, epoch as u64), stream::SHUFFLE);
        batch_items.shuffle(&mut rng);

        for batch in batch_items.chunks(config.batch_size) {
            if threads == 1 {
                for it in batch {
                    optimizer.add_term(&model, &it.edge, it.positive, it.weight);
                }
            } else {
                let shard = batch.len().div_ceil(threads);
                let shards: Vec<ShardGradient> = batch
                    .par_chunks(shard)
                    .map(|items| shard_gradient(&model, items))
                    .collect();
                for s in shards {
                    optimizer.add_shard(s);
                }
            }
            optimizer.apply(&mut model);
        }

        if model.entity_buffer().iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let train_loss = loss(&model, &split.train, &current_negatives, config.alpha)
            .ok()
            .filter(|l| l.is_finite())
            .ok_or(Error::Diverged { epoch })?;
        let validation_loss = if validation_usable {
            Some(
                loss(&model, &split.validation, &validation_negatives, config.alpha)
                    .ok()
                    .filter(|l| l.is_finite())
                    .ok_or(Error::Diverged { epoch })?,
            )
        } else {
            None
        };
        trace.push(EpochStats {
            epoch,
            train_loss,
            validation_loss,
        });
    }
    Ok(TrainOutcome { model, trace })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub mean_auc: f64,
    /// Sample standard deviation over replicates (0 for one replicate).
    pub std_auc: f64,
    pub aucs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub best_alpha: f64,
}

/// Trains `replicates` models per alpha, each with its own seed, and scores
/// them by WTF AUC on the validation split against non-recommended second
/// neighbours.
pub fn sweep_alpha(
    graph: &HinGraph,
    split: &EdgeSplit,
    negatives: &NegativeEdgeSet,
    base: &TrainConfig,
    alphas: &[f64],
    replicates: usize,
) -> Result<SweepTable> {
    if alphas.is_empty() {
        return Err(invalid("alpha sweep needs at least one alpha"));
    }
    if replicates == 0 {
        return Err(invalid("alpha sweep needs at least one replicate"));
    }
    let pairs = HeldoutPairs::sample(
        graph,
        &split.validation[RelationKind::Wtf],
        rng::derive(base.seed, stream::VALIDATION),
    )?;
    let jobs: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|a| (0..replicates).map(move |k| (a, k)))
        .collect();
    let run = |&(a, k): &(usize, usize)| -> Result<f64> {
        let config = TrainConfig {
            alpha: alphas[a],
            seed: rng::derive(base.seed, k as u64),
            ..base.clone()
        };
        let outcome = train(graph, split, negatives, &config)?;
        model_auc(&outcome.model, &pairs)
    };
    let aucs: Vec<f64> = if base.deterministic {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };
    let rows: Vec<SweepRow> = alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let xs = aucs[a * replicates..(a + 1) * replicates].to_vec();
            SweepRow {
                alpha,
                mean_auc: mean(&xs),
                std_auc: sample_std(&xs),
                aucs: xs,
            }
        })
        .collect();
    let best_alpha = rows
        .iter()
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if b.mean_auc >= r.mean_auc => Some(b),
            _ => Some(r),
        })
        .map(|r| r.alpha)
        .expect("non-empty");
    Ok(SweepTable { rows, best_alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_negative_set, split_edges, EntityId, SplitFractions};

    /// Two dense communities; Follow and WTF both stay inside a community.
    fn two_clusters(n_per: usize) -> HinGraph {
        let mut edges = Vec::new();
        let mut r = rng::seeded(5, 0);
        use rand::Rng as _;
        for c in 0..2 {
            let base = c * n_per;
            for i in 0..n_per {
                for j in 0..n_per {
                    if i == j {
                        continue;
                    }
                    let (s, t) = (EntityId::from(base + i), EntityId::from(base + j));
                    let u: f64 = r.random();
                    if u < 0.15 {
                        edges.push(Edge::new(s, RelationKind::Follow, t));
                    } else if u < 0.18 {
                        edges.push(Edge::new(s, RelationKind::Wtf, t));
                    }
                }
            }
        }
        HinGraph::with_entity_count(2 * n_per, edges).unwrap()
    }

    fn setup(seed: u64) -> (HinGraph, EdgeSplit, NegativeEdgeSet) {
        let g = two_clusters(40);
        let split = split_edges(&g, SplitFractions::default(), seed).unwrap();
        let negs = build_negative_set(&split, 3, &g, seed).unwrap();
        (g, split, negs)
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            dim: 8,
            batch_size: 64,
            seed: 9,
            alpha: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_runs_are_identical() {
        let (g, split, negs) = setup(1);
        let a = train(&g, &split, &negs, &small_config()).unwrap();
        let b = train(&g, &split, &negs, &small_config()).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.len(), 3);
    }

    #[test]
    fn training_loss_decreases() {
        let (g, split, negs) = setup(2);
        let out = train(&g, &split, &negs, &small_config()).unwrap();
        let init = init_embeddings(g.entity_count(), &RelationKind::ALL, &small_config()).unwrap();
        let l0 = loss(&init, &split.train, &negs, 0.5).unwrap();
        assert!(out.trace[0].train_loss < l0);
        for w in out.trace.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss, "{:?}", out.trace);
        }
        assert!(out.trace.iter().all(|s| s.validation_loss.is_some()));
    }

    #[test]
    fn alpha_zero_ignores_wtf_content() {
        let (g, split, negs) = setup(3);
        let config = TrainConfig {
            alpha: 0.0,
            ..small_config()
        };
        let a = train(&g, &split, &negs, &config).unwrap();
        let mut altered = split.clone();
        altered.train[RelationKind::Wtf].truncate(3);
        let mut altered_negs = negs.clone();
        altered_negs.edges[RelationKind::Wtf].reverse();
        let b = train(&g, &altered, &altered_negs, &config).unwrap();
        assert_eq!(a.model.entity_buffer(), b.model.entity_buffer());
    }

    #[test]
    fn parallel_path_trains() {
        let (g, split, negs) = setup(4);
        let config = TrainConfig {
            deterministic: false,
            ..small_config()
        };
        let out = train(&g, &split, &negs, &config).unwrap();
        assert!(out.trace.last().unwrap().train_loss.is_finite());
    }

    #[test]
    fn huge_learning_rate_reports_divergence_or_finishes() {
        let (g, split, negs) = setup(5);
        let config = TrainConfig {
            learning_rate: 1e200,
            ..small_config()
        };
        match train(&g, &split, &negs, &config) {
            Err(Error::Diverged { epoch }) => assert!((1..=3).contains(&epoch)),
            Ok(out) => assert!(out.trace.iter().all(|s| s.train_loss.is_finite())),
            Err(other) => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_weighted_relation_is_rejected() {
        let (g, mut split, negs) = setup(6);
        split.train[RelationKind::Wtf].clear();
        assert!(train(&g, &split, &negs, &small_config()).is_err());
    }

    #[test]
    fn sweep_has_one_row_per_alpha() {
        let (g, split, negs) = setup(7);
        let table = sweep_alpha(&g, &split, &negs, &small_config(), &[0.0, 1.0], 1).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.std_auc == 0.0 && r.aucs.len() == 1));
        assert!(table.best_alpha == 0.0 || table.best_alpha == 1.0);
    }

    #[test]
    fn sweep_std_is_sample_std() {
        let (g, split, negs) = setup(8);
        let table = sweep_alpha(&g, &split, &negs, &small_config(), &[0.5], 3).unwrap();
        let row = &table.rows[0];
        let m = row.aucs.iter().sum::<f64>() / 3.0;
        let var = row.aucs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 2.0;
        assert!((row.std_auc - var.sqrt()).abs() < 1e-15);
    }
}
