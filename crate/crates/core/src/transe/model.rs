use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng as _;

use super::TrainConfig;
use crate::error::{invalid, Error, Result};
use crate::graph::{Edge, EntityId, RelationKind};
use crate::rng::{self, stream};

/// Entity matrix (n x d, row-major) plus one translation vector per
/// relation kind.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    entities: Vec<f64>,
    relations: BTreeMap<RelationKind, Vec<f64>>,
    seed: u64,
}

impl EmbeddingModel {
    pub fn new(dim: usize, entities: Vec<f64>, relations: BTreeMap<RelationKind, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        if !entities.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "entity buffer of length {} is not a multiple of dimension {dim}",
                entities.len()
            )));
        }
        if relations.values().any(|v| v.len() != dim) {
            return Err(invalid("relation vector length differs from embedding dimension"));
        }
        if entities.iter().chain(relations.values().flatten()).any(|x| !x.is_finite()) {
            return Err(invalid("embedding contains non-finite entries"));
        }
        Ok(EmbeddingModel {
            dim,
            entities,
            relations,
            seed: 0,
        })
    }

    /// Wraps an `n x d` matrix.
    pub fn from_matrix(phi: &DMatrix<f64>, relations: BTreeMap<RelationKind, Vec<f64>>) -> Result<Self> {
        let (n, d) = phi.shape();
        let mut entities = Vec::with_capacity(n * d);
        for i in 0..n {
            entities.extend(phi.row(i).iter());
        }
        Self::new(d, entities, relations)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn row(&self, id: EntityId) -> &[f64] {
        let i = id.index() * self.dim;
        &self.entities[i..i + self.dim]
    }

    pub(crate) fn row_mut(&mut self, id: EntityId) -> &mut [f64] {
        let i = id.index() * self.dim;
        &mut self.entities[i..i + self.dim]
    }

    pub fn entity_buffer(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation(&self, relation: RelationKind) -> Option<&[f64]> {
        self.relations.get(&relation).map(Vec::as_slice)
    }

    pub(crate) fn relation_mut(&mut self, relation: RelationKind) -> Option<&mut Vec<f64>> {
        self.relations.get_mut(&relation)
    }

    pub fn relations(&self) -> &BTreeMap<RelationKind, Vec<f64>> {
        &self.relations
    }

    pub fn entity_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.entity_count(), self.dim, &self.entities)
    }

    /// Same relations, entity rows replaced by `phi`.
    pub fn with_entity_matrix(&self, phi: &DMatrix<f64>) -> Result<Self> {
        if phi.ncols() != self.dim {
            return Err(invalid("replacement matrix has a different dimension"));
        }
        Ok(Self::from_matrix(phi, self.relations.clone())?.with_seed(self.seed))
    }

    pub fn with_relations(mut self, relations: BTreeMap<RelationKind, Vec<f64>>) -> Result<Self> {
        if relations.values().any(|v| v.len() != self.dim) {
            return Err(invalid("relation vector length differs from embedding dimension"));
        }
        self.relations = relations;
        Ok(self)
    }

    /// TransE score `(phi_s + phi_r) . phi_t`.
    pub fn score(&self, edge: &Edge) -> Result<f64> {
        let n = self.entity_count();
        for id in [edge.source, edge.target] {
            if id.index() >= n {
                return Err(Error::UnknownEntity(format!("#{}", id.0)));
            }
        }
        let r = self
            .relation(edge.relation)
            .ok_or_else(|| invalid(format!("model has no vector for relation {}", edge.relation)))?;
        Ok(score_rows(self.row(edge.source), r, self.row(edge.target)))
    }
}

#[inline]
pub(crate) fn score_rows(source: &[f64], relation: &[f64], target: &[f64]) -> f64 {
    source
        .iter()
        .zip(relation)
        .zip(target)
        .map(|((s, r), t)| (s + r) * t)
        .sum()
}

/// Glorot-uniform initialisation with fan-in = fan-out = d, i.e. entries in
/// `[-sqrt(3/d), sqrt(3/d)]`. Relation vectors are drawn first, in
/// relation order, then entity rows.
pub fn init_embeddings(n: usize, relations: &[RelationKind], config: &TrainConfig) -> Result<EmbeddingModel> {
    if n == 0 {
        return Err(invalid("cannot initialise an embedding with zero entities"));
    }
    if config.dim == 0 {
        return Err(invalid("embedding dimension must be positive"));
    }
    let bound = glorot_bound(config.dim);
    let mut rng = rng::seeded(config.seed, stream::INIT);
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-bound..=bound)).collect() };
    let mut kinds = relations.to_vec();
    kinds.sort();
    kinds.dedup();
    let relations: BTreeMap<RelationKind, Vec<f64>> = kinds.into_iter().map(|r| (r, draw(config.dim))).collect();
    let entities = draw(n * config.dim);
    Ok(EmbeddingModel::new(config.dim, entities, relations)?.with_seed(config.seed))
}

pub fn glorot_bound(dim: usize) -> f64 {
    (6.0 / (2.0 * dim as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model2(s: [f64; 2], r: [f64; 2], t: [f64; 2]) -> EmbeddingModel {
        let rel = BTreeMap::from([(RelationKind::Wtf, r.to_vec())]);
        EmbeddingModel::new(2, [s, t].concat(), rel).unwrap()
    }

    fn edge() -> Edge {
        Edge::new(EntityId(0), RelationKind::Wtf, EntityId(1))
    }

    #[test]
    fn score_examples() {
        assert_eq!(model2([1.0, 0.0], [0.0, 0.0], [1.0, 0.0]).score(&edge()).unwrap(), 1.0);
        assert_eq!(model2([1.0, 0.0], [0.0, 1.0], [0.0, 1.0]).score(&edge()).unwrap(), 1.0);
        assert_eq!(model2([1.0, 0.0], [0.0, 1.0], [1.0, -1.0]).score(&edge()).unwrap(), 0.0);
    }

    #[test]
    fn unknown_relation_or_entity_errors() {
        let m = model2([1.0, 0.0], [0.0, 0.0], [1.0, 0.0]);
        assert!(m.score(&Edge::new(EntityId(0), RelationKind::Follow, EntityId(1))).is_err());
        assert!(m.score(&Edge::new(EntityId(0), RelationKind::Wtf, EntityId(5))).is_err());
    }

    #[test]
    fn glorot_bound_holds() {
        let cfg = TrainConfig {
            dim: 256,
            ..Default::default()
        };
        let m = init_embeddings(50, &RelationKind::ALL, &cfg).unwrap();
        let a = (6.0f64 / 512.0).sqrt();
        assert!(m.entity_buffer().iter().all(|x| x.abs() <= a));
        assert!(m.relations().values().flatten().all(|x| x.abs() <= a));
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = TrainConfig {
            dim: 8,
            seed: 42,
            ..Default::default()
        };
        let a = init_embeddings(20, &RelationKind::ALL, &cfg).unwrap();
        let b = init_embeddings(20, &RelationKind::ALL, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(init_embeddings(0, &RelationKind::ALL, &cfg).is_err());
    }

    #[test]
    fn init_sample_mean_near_zero() {
        // Uniform(-a, a) has variance a^2/3, so the mean of N draws has
        // standard error a / sqrt(3N).
        let cfg = TrainConfig {
            dim: 64,
            seed: 3,
            ..Default::default()
        };
        let n = 10_000;
        let m = init_embeddings(n, &[], &cfg).unwrap();
        let a = glorot_bound(64);
        let mean = m.entity_buffer().iter().sum::<f64>() / (n * 64) as f64;
        assert!(mean.abs() <= 3.0 * a / (3.0 * (n * 64) as f64).sqrt(), "mean {mean}");
    }
}
