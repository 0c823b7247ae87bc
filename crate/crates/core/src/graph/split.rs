use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Edge, HinGraph, PerRelation, RelationKind};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, stream};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let f = SplitFractions {
            train,
            validation,
            test,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(invalid(format!("split fractions must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("split fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Per-relation partition of the positive edges into train, validation and
/// test sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: PerRelation<Vec<Edge>>,
    pub validation: PerRelation<Vec<Edge>>,
    pub test: PerRelation<Vec<Edge>>,
    pub fractions: SplitFractions,
    pub seed: u64,
}

/// Shuffles each relation independently and cuts it into three parts.
/// Validation and test sizes are rounded to nearest; the remainder goes to
/// train. Relations without edges yield empty parts.
pub fn split_edges(graph: &HinGraph, fractions: SplitFractions, seed: u64) -> Result<EdgeSplit> {
    fractions.validate()?;
    let mut train = PerRelation::<Vec<Edge>>::default();
    let mut validation = PerRelation::<Vec<Edge>>::default();
    let mut test = PerRelation::<Vec<Edge>>::default();
    for r in RelationKind::ALL {
        let mut edges: Vec<Edge> = graph.edges(r).collect();
        let n = edges.len();
        if n == 0 {
            continue;
        }
        if n < 3 {
            return Err(Error::TooFewEdges { relation: r, count: n });
        }
        let mut rng = rng::seeded(seed, stream::SPLIT + r.index() as u64);
        edges.shuffle(&mut rng);
        let n_val = (fractions.validation * n as f64).round() as usize;
        let n_test = (fractions.test * n as f64).round() as usize;
        let n_train = n - n_val - n_test;
        test[r] = edges.split_off(n_train + n_val);
        validation[r] = edges.split_off(n_train);
        train[r] = edges;
    }
    Ok(EdgeSplit {
        train,
        validation,
        test,
        fractions,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EntityId;
    use std::collections::HashSet;

    fn star(n_follow: usize, n_wtf: usize) -> HinGraph {
        let n = n_follow.max(n_wtf) + 1;
        let follow = (1..=n_follow).map(|t| Edge::new(EntityId(0), RelationKind::Follow, EntityId::from(t)));
        let wtf = (1..=n_wtf).map(|s| Edge::new(EntityId::from(s), RelationKind::Wtf, EntityId(0)));
        HinGraph::with_entity_count(n, follow.chain(wtf)).unwrap()
    }

    #[test]
    fn ten_edges_split_eight_one_one() {
        let s = split_edges(&star(10, 0), SplitFractions::default(), 7).unwrap();
        let f = RelationKind::Follow;
        assert_eq!((s.train[f].len(), s.validation[f].len(), s.test[f].len()), (8, 1, 1));
    }

    #[test]
    fn relations_split_independently() {
        let s = split_edges(&star(100, 100), SplitFractions::default(), 1).unwrap();
        for r in RelationKind::ALL {
            assert_eq!((s.train[r].len(), s.validation[r].len(), s.test[r].len()), (80, 10, 10));
            assert!(s.train[r].iter().all(|e| e.relation == r));
        }
    }

    #[test]
    fn invalid_fractions_rejected() {
        assert!(SplitFractions::new(0.5, 0.5, 0.5).is_err());
        assert!(SplitFractions::new(1.0, 0.0, 0.0).is_err());
        let bad = SplitFractions {
            train: 0.5,
            validation: 0.5,
            test: 0.5,
        };
        assert!(split_edges(&star(10, 0), bad, 0).is_err());
    }

    #[test]
    fn too_few_edges_names_relation() {
        match split_edges(&star(10, 2), SplitFractions::default(), 0) {
            Err(Error::TooFewEdges { relation, count }) => {
                assert_eq!(relation, RelationKind::Wtf);
                assert_eq!(count, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_partitions_and_is_reproducible() {
        let g = star(200, 150);
        let a = split_edges(&g, SplitFractions::default(), 11).unwrap();
        let b = split_edges(&g, SplitFractions::default(), 11).unwrap();
        let c = split_edges(&g, SplitFractions::default(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, c.train);
        for r in RelationKind::ALL {
            let mut all: Vec<Edge> = a.train[r].clone();
            all.extend(&a.validation[r]);
            all.extend(&a.test[r]);
            let uniq: HashSet<Edge> = all.iter().copied().collect();
            assert_eq!(uniq.len(), all.len());
            assert_eq!(uniq, g.edges(r).collect());
        }
    }
}
