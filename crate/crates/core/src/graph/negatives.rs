//! Negative edges by target corruption.
//!
//! A negative keeps the source and relation of a positive edge and replaces
//! its target using one of three strategies. Corrupted edges never coincide
//! with an observed edge of the same relation.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Edge, EntityId, HinGraph, PerRelation, RelationKind};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, stream, Rng};

/// Rejection-resampling cap per negative.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SamplingStrategy {
    /// Any registered entity, equiprobably.
    Uniform,
    /// Proportional to the target's frequency among the positives.
    Prevalence,
    /// A non-adjacent friend of a friend of the source.
    SecondNeighborhood,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 3] = [
        SamplingStrategy::Uniform,
        SamplingStrategy::Prevalence,
        SamplingStrategy::SecondNeighborhood,
    ];
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NegativeEdge {
    pub edge: Edge,
    pub strategy: SamplingStrategy,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NegativeEdgeSet {
    pub edges: PerRelation<Vec<NegativeEdge>>,
    pub ratio: usize,
    /// Second-neighbourhood slots that found no eligible positive to corrupt.
    pub skipped: PerRelation<usize>,
}

impl NegativeEdgeSet {
    pub fn len(&self, relation: RelationKind) -> usize {
        self.edges[relation].len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.follow.is_empty() && self.edges.wtf.is_empty()
    }

    pub fn edges_of(&self, relation: RelationKind) -> impl Iterator<Item = Edge> + '_ {
        self.edges[relation].iter().map(|n| n.edge)
    }

    pub fn strategy_count(&self, relation: RelationKind, strategy: SamplingStrategy) -> usize {
        self.edges[relation].iter().filter(|n| n.strategy == strategy).count()
    }
}

/// Output of [`corrupt_edges`].
#[derive(Clone, Debug, PartialEq)]
pub struct Corruption {
    pub edges: Vec<Edge>,
    /// Positives whose source had no eligible second-neighbourhood target.
    pub skipped: Vec<Edge>,
}

struct Corrupter<'g> {
    graph: &'g HinGraph,
    prevalence: Option<(Vec<EntityId>, WeightedIndex<u64>)>,
    second: HashMap<(EntityId, RelationKind), Vec<EntityId>>,
}

impl<'g> Corrupter<'g> {
    fn new(graph: &'g HinGraph, positives: &[Edge]) -> Self {
        let mut counts: BTreeMap<EntityId, u64> = BTreeMap::new();
        for e in positives {
            *counts.entry(e.target).or_default() += 1;
        }
        let prevalence = if counts.is_empty() {
            None
        } else {
            let (targets, weights): (Vec<_>, Vec<_>) = counts.into_iter().unzip();
            Some((targets, WeightedIndex::new(weights).expect("positive counts")))
        };
        Corrupter {
            graph,
            prevalence,
            second: HashMap::new(),
        }
    }

    /// Second-order Follow neighbours of `source` that are not already a
    /// target of `source` under `relation`.
    fn candidates(&mut self, source: EntityId, relation: RelationKind) -> &[EntityId] {
        let graph = self.graph;
        self.second.entry((source, relation)).or_insert_with(|| {
            let mut c = graph.second_neighbors_unchecked(source, RelationKind::Follow);
            let taken = graph.out_neighbors(source, relation);
            c.retain(|t| taken.binary_search(t).is_err());
            c
        })
    }

    fn collides(&self, source: EntityId, relation: RelationKind, target: EntityId) -> bool {
        target == source || self.graph.contains(&Edge::new(source, relation, target))
    }

    fn corrupt(&mut self, edge: &Edge, strategy: SamplingStrategy, rng: &mut Rng) -> Result<Option<Edge>> {
        let n = self.graph.entity_count();
        match strategy {
            SamplingStrategy::SecondNeighborhood => {
                let cands = self.candidates(edge.source, edge.relation);
                if cands.is_empty() {
                    return Ok(None);
                }
                let t = cands[rng.random_range(0..cands.len())];
                Ok(Some(Edge::new(edge.source, edge.relation, t)))
            }
            SamplingStrategy::Uniform | SamplingStrategy::Prevalence => {
                for _ in 0..MAX_RESAMPLE_ATTEMPTS {
                    let t = match strategy {
                        SamplingStrategy::Uniform => EntityId::from(rng.random_range(0..n)),
                        _ => {
                            let (targets, dist) = self
                                .prevalence
                                .as_ref()
                                .ok_or_else(|| invalid("prevalence sampling needs positives"))?;
                            targets[dist.sample(rng)]
                        }
                    };
                    if !self.collides(edge.source, edge.relation, t) {
                        return Ok(Some(Edge::new(edge.source, edge.relation, t)));
                    }
                }
                Err(Error::ResamplingExhausted {
                    source_name: self.graph.name(edge.source).to_string(),
                    target_name: self.graph.name(edge.target).to_string(),
                    attempts: MAX_RESAMPLE_ATTEMPTS,
                })
            }
        }
    }
}

/// Corrupts every positive once with `strategy`.
pub fn corrupt_edges(
    positives: &[Edge],
    strategy: SamplingStrategy,
    graph: &HinGraph,
    seed: u64,
) -> Result<Corruption> {
    let mut rng = rng::seeded(seed, stream::NEGATIVES);
    let mut corrupter = Corrupter::new(graph, positives);
    let mut edges = Vec::with_capacity(positives.len());
    let mut skipped = Vec::new();
    for e in positives {
        match corrupter.corrupt(e, strategy, &mut rng)? {
            Some(neg) => edges.push(neg),
            None => skipped.push(*e),
        }
    }
    Ok(Corruption { edges, skipped })
}

/// `ratio` negatives per positive of each relation, split evenly across the
/// three strategies.
pub fn negatives_for(
    positives: &PerRelation<Vec<Edge>>,
    ratio: usize,
    graph: &HinGraph,
    seed: u64,
) -> Result<NegativeEdgeSet> {
    if ratio == 0 {
        return Err(invalid("negative ratio must be at least 1"));
    }
    let mut out = NegativeEdgeSet {
        ratio,
        ..Default::default()
    };
    for r in RelationKind::ALL {
        let pos = &positives[r];
        if pos.is_empty() {
            continue;
        }
        // Each relation draws from its own stream so one relation's content
        // never perturbs the other's negatives.
        let mut rng = rng::seeded(seed, stream::NEGATIVES + 1 + r.index() as u64);
        let mut corrupter = Corrupter::new(graph, pos);
        let mut slots: Vec<usize> = (0..pos.len()).flat_map(|i| std::iter::repeat_n(i, ratio)).collect();
        slots.shuffle(&mut rng);

        let mut eligible: Option<Vec<usize>> = None;
        let mut negs = Vec::with_capacity(slots.len());
        for (k, &i) in slots.iter().enumerate() {
            let strategy = SamplingStrategy::ALL[k % 3];
            let mut edge = pos[i];
            if strategy == SamplingStrategy::SecondNeighborhood
                && corrupter.candidates(edge.source, r).is_empty()
            {
                let eligible = eligible.get_or_insert_with(|| {
                    (0..pos.len())
                        .filter(|&j| !corrupter.candidates(pos[j].source, r).is_empty())
                        .collect()
                });
                if eligible.is_empty() {
                    out.skipped[r] += 1;
                    continue;
                }
                edge = pos[eligible[rng.random_range(0..eligible.len())]];
            }
            if let Some(neg) = corrupter.corrupt(&edge, strategy, &mut rng)? {
                negs.push(NegativeEdge { edge: neg, strategy });
            } else {
                out.skipped[r] += 1;
            }
        }
        out.edges[r] = negs;
    }
    Ok(out)
}

/// Negatives for the training part of a split.
pub fn build_negative_set(
    split: &super::EdgeSplit,
    ratio: usize,
    graph: &HinGraph,
    seed: u64,
) -> Result<NegativeEdgeSet> {
    negatives_for(&split.train, ratio, graph, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{split_edges, SplitFractions};
    use std::collections::HashSet;

    fn e(s: u32, r: RelationKind, t: u32) -> Edge {
        Edge::new(EntityId(s), r, EntityId(t))
    }

    #[test]
    fn uniform_keeps_source_and_relation() {
        let f = RelationKind::Follow;
        let pos: Vec<Edge> = (1..20).map(|t| e(0, f, t)).collect();
        let extra = (20..60).map(|s| e(s, f, s - 1));
        let g = HinGraph::with_entity_count(60, pos.iter().copied().chain(extra)).unwrap();
        let out = corrupt_edges(&pos[..5], SamplingStrategy::Uniform, &g, 3).unwrap();
        assert_eq!(out.edges.len(), 5);
        for (p, n) in pos.iter().zip(&out.edges) {
            assert_eq!((p.source, p.relation), (n.source, n.relation));
            assert_ne!(p.target, n.target);
            assert!(!g.contains(n));
        }
    }

    #[test]
    fn prevalence_follows_target_frequency() {
        // t=1 appears three times, u=2 once; sources 3..7 never collide.
        let w = RelationKind::Wtf;
        let pos = vec![e(3, w, 1), e(4, w, 1), e(5, w, 1), e(6, w, 2)];
        let g = HinGraph::with_entity_count(8, pos.clone()).unwrap();
        let probe: Vec<Edge> = (0..100_000).map(|_| e(7, w, 0)).collect();
        let mut corrupter = Corrupter::new(&g, &pos);
        let mut rng = rng::seeded(5, 0);
        let (mut c1, mut c2) = (0usize, 0usize);
        for p in &probe {
            let n = corrupter.corrupt(p, SamplingStrategy::Prevalence, &mut rng).unwrap().unwrap();
            match n.target.0 {
                1 => c1 += 1,
                2 => c2 += 1,
                other => panic!("unexpected target {other}"),
            }
        }
        let ratio = c1 as f64 / c2 as f64;
        assert!((ratio - 3.0).abs() < 0.15, "ratio {ratio}");
    }

    #[test]
    fn second_neighborhood_on_chain_picks_only_candidate() {
        let f = RelationKind::Follow;
        let g = HinGraph::with_entity_count(3, [e(0, f, 1), e(1, f, 2)]).unwrap();
        let out = corrupt_edges(&[e(0, f, 1)], SamplingStrategy::SecondNeighborhood, &g, 0).unwrap();
        assert_eq!(out.edges, vec![e(0, f, 2)]);
        // Entity 2 has no friends of friends.
        let out = corrupt_edges(&[e(1, f, 2)], SamplingStrategy::SecondNeighborhood, &g, 0).unwrap();
        assert!(out.edges.is_empty());
        assert_eq!(out.skipped.len(), 1);
    }

    #[test]
    fn exhausted_resampling_is_an_error() {
        // Two entities, the only possible target is already positive.
        let f = RelationKind::Follow;
        let g = HinGraph::with_entity_count(2, [e(0, f, 1)]).unwrap();
        let err = corrupt_edges(&[e(0, f, 1)], SamplingStrategy::Uniform, &g, 0).unwrap_err();
        assert!(matches!(err, Error::ResamplingExhausted { attempts: 100, .. }));
    }

    fn ring_graph(n: usize) -> HinGraph {
        // Follow ring with skips plus WTF edges to second neighbours.
        let f = RelationKind::Follow;
        let mut edges = Vec::new();
        for i in 0..n {
            edges.push(Edge::new(EntityId::from(i), f, EntityId::from((i + 1) % n)));
            edges.push(Edge::new(EntityId::from(i), f, EntityId::from((i + 5) % n)));
            edges.push(Edge::new(EntityId::from(i), RelationKind::Wtf, EntityId::from((i + 2) % n)));
        }
        HinGraph::with_entity_count(n, edges).unwrap()
    }

    #[test]
    fn ratio_three_gives_equal_strategy_thirds() {
        let g = ring_graph(150);
        let split = split_edges(&g, SplitFractions::new(0.8, 0.1, 0.1).unwrap(), 0).unwrap();
        assert_eq!(split.train.follow.len(), 240);
        let negs = build_negative_set(&split, 3, &g, 9).unwrap();
        for r in RelationKind::ALL {
            let p = split.train[r].len();
            assert_eq!(negs.len(r), 3 * p);
            for s in SamplingStrategy::ALL {
                assert_eq!(negs.strategy_count(r, s), p);
            }
        }
        let all: HashSet<Edge> = g.all_edges().collect();
        assert!(negs.edges_of(RelationKind::Follow).chain(negs.edges_of(RelationKind::Wtf)).all(|n| !all.contains(&n)));
    }

    #[test]
    fn three_hundred_positives_ratio_three() {
        let g = ring_graph(400);
        let pos = PerRelation {
            follow: g.edges(RelationKind::Follow).take(300).collect(),
            wtf: Vec::new(),
        };
        let negs = negatives_for(&pos, 3, &g, 1).unwrap();
        assert_eq!(negs.len(RelationKind::Follow), 900);
        for s in SamplingStrategy::ALL {
            assert_eq!(negs.strategy_count(RelationKind::Follow, s), 300);
        }
    }

    #[test]
    fn ratio_one_three_positives() {
        let g = ring_graph(30);
        let pos = PerRelation {
            follow: g.edges(RelationKind::Follow).take(3).collect(),
            wtf: Vec::new(),
        };
        let negs = negatives_for(&pos, 1, &g, 4).unwrap();
        for s in SamplingStrategy::ALL {
            assert_eq!(negs.strategy_count(RelationKind::Follow, s), 1);
        }
        assert!(negatives_for(&pos, 0, &g, 4).is_err());
    }

    #[test]
    fn wtf_second_neighborhood_excludes_recommended() {
        let g = ring_graph(40);
        let pos: Vec<Edge> = g.edges(RelationKind::Wtf).collect();
        let out = corrupt_edges(&pos, SamplingStrategy::SecondNeighborhood, &g, 2).unwrap();
        for n in &out.edges {
            assert!(!g.out_neighbors(n.source, RelationKind::Wtf).contains(&n.target));
            assert!(!g.out_neighbors(n.source, RelationKind::Follow).contains(&n.target));
        }
    }
}
