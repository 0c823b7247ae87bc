//! Heterogeneous user-to-user network with typed `Follow` and `WTF` edges.
//!
//! Entities are interned into dense indices. Edge sets are deduplicated per
//! relation and carry a sorted out-neighbour index, which is what the
//! negative samplers and the recommendation heuristics query.

mod ingest;
mod negatives;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use ingest::{ingest_edges, parse_edges, write_edges, EdgeSchema, IngestOptions, IngestSummary};
pub use negatives::{
    build_negative_set, corrupt_edges, negatives_for, Corruption, NegativeEdge, NegativeEdgeSet,
    SamplingStrategy, MAX_RESAMPLE_ATTEMPTS,
};
pub use split::{split_edges, EdgeSplit, SplitFractions};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    Follow,
    #[serde(rename = "WTF")]
    Wtf,
}

impl RelationKind {
    pub const ALL: [RelationKind; 2] = [RelationKind::Follow, RelationKind::Wtf];

    pub fn index(self) -> usize {
        match self {
            RelationKind::Follow => 0,
            RelationKind::Wtf => 1,
        }
    }

    /// Canonical token used in edge-list files and the embedding header.
    pub fn token(self) -> &'static str {
        match self {
            RelationKind::Follow => "Follow",
            RelationKind::Wtf => "WTF",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.token() == token)
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One value per relation kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerRelation<T> {
    pub follow: T,
    #[serde(rename = "WTF")]
    pub wtf: T,
}

impl<T> PerRelation<T> {
    pub fn from_fn(mut f: impl FnMut(RelationKind) -> T) -> Self {
        PerRelation {
            follow: f(RelationKind::Follow),
            wtf: f(RelationKind::Wtf),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (RelationKind, &T)> {
        RelationKind::ALL.into_iter().map(move |r| (r, &self[r]))
    }

    pub fn map<U>(&self, mut f: impl FnMut(RelationKind, &T) -> U) -> PerRelation<U> {
        PerRelation::from_fn(|r| f(r, &self[r]))
    }
}

impl<T> Index<RelationKind> for PerRelation<T> {
    type Output = T;

    fn index(&self, r: RelationKind) -> &T {
        match r {
            RelationKind::Follow => &self.follow,
            RelationKind::Wtf => &self.wtf,
        }
    }
}

impl<T> IndexMut<RelationKind> for PerRelation<T> {
    fn index_mut(&mut self, r: RelationKind) -> &mut T {
        match r {
            RelationKind::Follow => &mut self.follow,
            RelationKind::Wtf => &mut self.wtf,
        }
    }
}

/// Dense entity index in `[0, n)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for EntityId {
    fn from(i: usize) -> Self {
        EntityId(u32::try_from(i).expect("entity index exceeds u32"))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub source: EntityId,
    pub relation: RelationKind,
    pub target: EntityId,
}

impl Edge {
    pub fn new(source: EntityId, relation: RelationKind, target: EntityId) -> Self {
        Edge {
            source,
            relation,
            target,
        }
    }
}

/// Immutable typed graph. Safe to share between readers.
#[derive(Clone, Debug)]
pub struct HinGraph {
    names: Vec<String>,
    lookup: HashMap<String, EntityId>,
    /// Sorted, deduplicated `(source, target)` pairs per relation.
    pairs: PerRelation<Vec<(EntityId, EntityId)>>,
    /// Sorted out-neighbours per relation.
    out: PerRelation<Vec<Vec<EntityId>>>,
    in_degree: PerRelation<Vec<u32>>,
}

impl PartialEq for HinGraph {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.pairs == other.pairs
    }
}

impl HinGraph {
    /// Builds a graph over the given entity names. Duplicate edges collapse
    /// into one; self-loops and out-of-range endpoints are rejected.
    pub fn new(names: Vec<String>, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let n = names.len();
        let mut lookup = HashMap::with_capacity(n);
        for (i, name) in names.iter().enumerate() {
            if lookup.insert(name.clone(), EntityId::from(i)).is_some() {
                return Err(invalid(format!("duplicate entity name `{name}`")));
            }
        }
        let mut pairs: PerRelation<Vec<(EntityId, EntityId)>> = PerRelation::default();
        for e in edges {
            if e.source.index() >= n || e.target.index() >= n {
                return Err(invalid(format!(
                    "edge endpoint out of range: {} -> {} with {n} entities",
                    e.source.0, e.target.0
                )));
            }
            if e.source == e.target {
                return Err(invalid(format!("self-loop on entity {}", names[e.source.index()])));
            }
            pairs[e.relation].push((e.source, e.target));
        }
        Ok(Self::assemble(names, lookup, pairs))
    }

    /// Anonymous entities named by zero-padded index, so name order equals
    /// index order.
    pub fn with_entity_count(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let width = n.saturating_sub(1).to_string().len();
        let names = (0..n).map(|i| format!("u{i:0width$}")).collect();
        Self::new(names, edges)
    }

    fn assemble(
        names: Vec<String>,
        lookup: HashMap<String, EntityId>,
        mut pairs: PerRelation<Vec<(EntityId, EntityId)>>,
    ) -> Self {
        let n = names.len();
        let mut out: PerRelation<Vec<Vec<EntityId>>> = PerRelation::from_fn(|_| vec![Vec::new(); n]);
        let mut in_degree: PerRelation<Vec<u32>> = PerRelation::from_fn(|_| vec![0; n]);
        for r in RelationKind::ALL {
            let list = &mut pairs[r];
            list.sort_unstable();
            list.dedup();
            for &(s, t) in list.iter() {
                out[r][s.index()].push(t);
                in_degree[r][t.index()] += 1;
            }
        }
        HinGraph {
            names,
            lookup,
            pairs,
            out,
            in_degree,
        }
    }

    /// A graph over the same entity registry with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let n = self.names.len();
        let mut pairs: PerRelation<Vec<(EntityId, EntityId)>> = PerRelation::default();
        for e in edges {
            if e.source.index() >= n || e.target.index() >= n || e.source == e.target {
                return Err(invalid(format!("invalid edge {} -> {}", e.source.0, e.target.0)));
            }
            pairs[e.relation].push((e.source, e.target));
        }
        Ok(Self::assemble(self.names.clone(), self.lookup.clone(), pairs))
    }

    pub fn entity_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: EntityId) -> &str {
        &self.names[id.index()]
    }

    pub fn entity(&self, name: &str) -> Result<EntityId> {
        self.lookup
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownEntity(name.to_string()))
    }

    pub fn edge_count(&self, relation: RelationKind) -> usize {
        self.pairs[relation].len()
    }

    pub fn total_edges(&self) -> usize {
        RelationKind::ALL.iter().map(|&r| self.edge_count(r)).sum()
    }

    /// Edges of one relation in `(source, target)` order.
    pub fn edges(&self, relation: RelationKind) -> impl Iterator<Item = Edge> + '_ {
        self.pairs[relation]
            .iter()
            .map(move |&(s, t)| Edge::new(s, relation, t))
    }

    pub fn all_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        RelationKind::ALL.into_iter().flat_map(move |r| self.edges(r))
    }

    pub fn out_neighbors(&self, id: EntityId, relation: RelationKind) -> &[EntityId] {
        &self.out[relation][id.index()]
    }

    pub fn in_degree(&self, id: EntityId, relation: RelationKind) -> u32 {
        self.in_degree[relation][id.index()]
    }

    pub fn contains(&self, edge: &Edge) -> bool {
        edge.source.index() < self.names.len()
            && self.out[edge.relation][edge.source.index()]
                .binary_search(&edge.target)
                .is_ok()
    }

    /// Targets exactly two hops away along `relation`, excluding the entity
    /// itself and its direct out-neighbours. Sorted ascending.
    pub fn second_neighbors(&self, entity: EntityId, relation: RelationKind) -> Result<Vec<EntityId>> {
        if entity.index() >= self.names.len() {
            return Err(Error::UnknownEntity(format!("#{}", entity.0)));
        }
        Ok(self.second_neighbors_unchecked(entity, relation))
    }

    pub(crate) fn second_neighbors_unchecked(&self, entity: EntityId, relation: RelationKind) -> Vec<EntityId> {
        let first = self.out_neighbors(entity, relation);
        let mut hop2: Vec<EntityId> = first
            .iter()
            .flat_map(|&b| self.out_neighbors(b, relation).iter().copied())
            .collect();
        hop2.sort_unstable();
        hop2.dedup();
        hop2.retain(|&c| c != entity && first.binary_search(&c).is_err());
        hop2
    }

    /// Second-order friends of `source` that were not recommended to it:
    /// two Follow hops away and not a WTF target of `source`.
    pub fn non_recommended_second_neighbors(&self, source: EntityId) -> Vec<EntityId> {
        let wtf = self.out_neighbors(source, RelationKind::Wtf);
        let mut cands = self.second_neighbors_unchecked(source, RelationKind::Follow);
        cands.retain(|c| wtf.binary_search(c).is_err());
        cands
    }
}
