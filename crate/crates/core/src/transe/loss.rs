use std::collections::BTreeMap;

use super::{score_rows, EmbeddingModel};
use crate::error::{invalid, Error, Result};
use crate::graph::{Edge, NegativeEdgeSet, PerRelation, RelationKind};
use crate::stats::{log_sigmoid, sigmoid};

/// Mixing weight of a relation's log-likelihood: `alpha` for WTF,
/// `1 - alpha` for Follow.
pub fn relation_weight(relation: RelationKind, alpha: f64) -> f64 {
    match relation {
        RelationKind::Wtf => alpha,
        RelationKind::Follow => 1.0 - alpha,
    }
}

fn check_inputs(
    model: &EmbeddingModel,
    positives: &PerRelation<Vec<Edge>>,
    negatives: &NegativeEdgeSet,
    alpha: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let total: usize = RelationKind::ALL
        .iter()
        .map(|&r| positives[r].len() + negatives.len(r))
        .sum();
    if total == 0 {
        return Err(invalid("loss needs at least one edge"));
    }
    if alpha > 0.0 && positives[RelationKind::Wtf].is_empty() {
        return Err(invalid("no WTF positives but alpha > 0"));
    }
    let n = model.entity_count();
    for r in RelationKind::ALL {
        let has_edges = !positives[r].is_empty() || negatives.len(r) > 0;
        if has_edges && model.relation(r).is_none() {
            return Err(invalid(format!("model has no vector for relation {r}")));
        }
        for e in positives[r].iter().chain(negatives.edges[r].iter().map(|n| &n.edge)) {
            if e.source.index() >= n || e.target.index() >= n {
                return Err(Error::UnknownEntity(format!("#{}", e.source.0.max(e.target.0))));
            }
        }
    }
    Ok(())
}

/// Labelled terms `(edge, is_positive)` of relations with nonzero weight.
fn weighted_terms<'a>(
    positives: &'a PerRelation<Vec<Edge>>,
    negatives: &'a NegativeEdgeSet,
    alpha: f64,
) -> impl Iterator<Item = (Edge, bool, f64)> + 'a {
    RelationKind::ALL.into_iter().flat_map(move |r| {
        let w = relation_weight(r, alpha);
        let pos = positives[r].iter().map(move |e| (*e, true, w));
        let neg = negatives.edges_of(r).map(move |e| (e, false, w));
        pos.chain(neg).filter(|&(_, _, w)| w != 0.0)
    })
}

/// `-[alpha * L_wtf + (1 - alpha) * L_follow]` with
/// `L_r = sum_P log sigma(f) + sum_N log sigma(-f)`.
pub fn loss(
    model: &EmbeddingModel,
    positives: &PerRelation<Vec<Edge>>,
    negatives: &NegativeEdgeSet,
    alpha: f64,
) -> Result<f64> {
    check_inputs(model, positives, negatives, alpha)?;
    let mut total = 0.0;
    for (e, positive, w) in weighted_terms(positives, negatives, alpha) {
        let r = model.relation(e.relation).expect("checked");
        let f = score_rows(model.row(e.source), r, model.row(e.target));
        if !f.is_finite() {
            return Err(invalid(format!("non-finite score on edge {e:?}")));
        }
        let sign = if positive { 1.0 } else { -1.0 };
        total -= w * log_sigmoid(sign * f);
    }
    Ok(total)
}

/// Dense gradient of [`loss`] with the same layout as the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub entities: Vec<f64>,
    pub relations: BTreeMap<RelationKind, Vec<f64>>,
}

/// Derivative of one term's contribution with respect to its score.
#[inline]
pub(crate) fn score_derivative(f: f64, positive: bool, weight: f64) -> f64 {
    // d/df -log sigma(f) = -sigma(-f);  d/df -log sigma(-f) = sigma(f)
    if positive {
        -weight * sigmoid(-f)
    } else {
        weight * sigmoid(f)
    }
}

pub fn loss_gradient(
    model: &EmbeddingModel,
    positives: &PerRelation<Vec<Edge>>,
    negatives: &NegativeEdgeSet,
    alpha: f64,
) -> Result<Gradient> {
    check_inputs(model, positives, negatives, alpha)?;
    let d = model.dim();
    let mut entities = vec![0.0; model.entity_buffer().len()];
    let mut relations: BTreeMap<RelationKind, Vec<f64>> =
        model.relations().keys().map(|&r| (r, vec![0.0; d])).collect();
    for (e, positive, w) in weighted_terms(positives, negatives, alpha) {
        let r = model.relation(e.relation).expect("checked");
        let s = model.row(e.source);
        let t = model.row(e.target);
        let g = score_derivative(score_rows(s, r, t), positive, w);
        let (si, ti) = (e.source.index() * d, e.target.index() * d);
        let gr = relations.get_mut(&e.relation).expect("checked");
        for j in 0..d {
            entities[si + j] += g * t[j];
            entities[ti + j] += g * (s[j] + r[j]);
            gr[j] += g * t[j];
        }
    }
    Ok(Gradient { entities, relations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityId, NegativeEdge, SamplingStrategy};
    use crate::rng;
    use rand::Rng as _;

    const F: RelationKind = RelationKind::Follow;
    const W: RelationKind = RelationKind::Wtf;

    fn e(s: u32, r: RelationKind, t: u32) -> Edge {
        Edge::new(EntityId(s), r, EntityId(t))
    }

    fn negs(edges: &[Edge]) -> NegativeEdgeSet {
        let mut set = NegativeEdgeSet {
            ratio: 1,
            ..Default::default()
        };
        for &edge in edges {
            set.edges[edge.relation].push(NegativeEdge {
                edge,
                strategy: SamplingStrategy::Uniform,
            });
        }
        set
    }

    fn pos(edges: &[Edge]) -> PerRelation<Vec<Edge>> {
        let mut p = PerRelation::<Vec<Edge>>::default();
        for &edge in edges {
            p[edge.relation].push(edge);
        }
        p
    }

    fn model(dim: usize, entities: Vec<f64>, wtf: Vec<f64>, follow: Vec<f64>) -> EmbeddingModel {
        EmbeddingModel::new(dim, entities, BTreeMap::from([(W, wtf), (F, follow)])).unwrap()
    }

    #[test]
    fn zero_score_costs_log_two() {
        // Orthogonal source and target, zero relation vector: f = 0.
        let m = model(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], vec![0.0; 2]);
        let l = loss(&m, &pos(&[e(0, W, 1)]), &negs(&[]), 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = loss(&m, &pos(&[e(0, F, 1)]), &negs(&[]), 0.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_pair_closed_form() {
        // f(0 -> 1) = +10 and f(0 -> 2) = -10.
        let m = model(1, vec![1.0, 10.0, -10.0], vec![0.0], vec![0.0]);
        let l = loss(&m, &pos(&[e(0, W, 1)]), &negs(&[e(0, W, 2)]), 1.0).unwrap();
        let expected = 2.0 * (-10.0f64).exp().ln_1p();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 9.08e-5).abs() < 1e-7);
    }

    #[test]
    fn alpha_one_ignores_follow_edges() {
        let mut r = rng::seeded(1, 0);
        let ent: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let m = model(2, ent, vec![0.3, -0.2], vec![0.5, 0.1]);
        let wtf = [e(0, W, 1), e(2, W, 3)];
        let a = pos(&[wtf[0], wtf[1], e(0, F, 2), e(1, F, 3), e(4, F, 5)]);
        let b = pos(&[wtf[0], wtf[1], e(5, F, 0), e(3, F, 2), e(2, F, 1)]);
        let n = negs(&[e(0, W, 5), e(2, F, 4)]);
        assert_eq!(loss(&m, &a, &n, 1.0).unwrap(), loss(&m, &b, &n, 1.0).unwrap());
    }

    #[test]
    fn rejects_missing_wtf_and_empty_input() {
        let m = model(1, vec![1.0, 1.0], vec![0.0], vec![0.0]);
        assert!(loss(&m, &pos(&[e(0, F, 1)]), &negs(&[]), 0.5).is_err());
        assert!(loss(&m, &pos(&[]), &negs(&[]), 0.0).is_err());
    }

    #[test]
    fn loss_is_nonnegative() {
        let mut r = rng::seeded(2, 0);
        for _ in 0..20 {
            let ent: Vec<f64> = (0..15).map(|_| r.random_range(-3.0..3.0)).collect();
            let m = model(3, ent, vec![0.1, 0.2, 0.3], vec![-0.1, 0.0, 0.4]);
            let l = loss(&m, &pos(&[e(0, W, 1), e(2, F, 3)]), &negs(&[e(0, W, 4)]), r.random()).unwrap();
            assert!(l >= 0.0);
        }
    }

    /// Central differences against the analytic gradient.
    pub(crate) fn max_gradient_error(seed: u64) -> f64 {
        let mut r = rng::seeded(seed, 0xF1);
        let d = 3;
        let n = 5;
        let ent: Vec<f64> = (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect();
        let wtf: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let fol: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let m = model(d, ent, wtf, fol);
        let p = pos(&[e(0, W, 1), e(2, W, 3), e(1, F, 2), e(3, F, 4), e(4, F, 0)]);
        let ng = negs(&[e(0, W, 3), e(2, W, 4), e(1, F, 0), e(3, F, 1)]);
        let alpha = r.random_range(0.05..0.95);
        let g = loss_gradient(&m, &p, &ng, alpha).unwrap();
        let h = 1e-5;
        let rel_err = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
        let mut worst: f64 = 0.0;
        for k in 0..n * d {
            let bump = |delta: f64| {
                let mut buf = m.entity_buffer().to_vec();
                buf[k] += delta;
                let mm = EmbeddingModel::new(d, buf, m.relations().clone()).unwrap();
                loss(&mm, &p, &ng, alpha).unwrap()
            };
            worst = worst.max(rel_err((bump(h) - bump(-h)) / (2.0 * h), g.entities[k]));
        }
        for rel in RelationKind::ALL {
            for j in 0..d {
                let bump = |delta: f64| {
                    let mut rels = m.relations().clone();
                    rels.get_mut(&rel).unwrap()[j] += delta;
                    let mm = m.clone().with_relations(rels).unwrap();
                    loss(&mm, &p, &ng, alpha).unwrap()
                };
                worst = worst.max(rel_err((bump(h) - bump(-h)) / (2.0 * h), g.relations[&rel][j]));
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..25 {
            let err = max_gradient_error(seed);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }
}
