//! Friend slates and the impact of switching embeddings on them.
//!
//! A slate ranks every entity the source does not already follow by the WTF
//! score `(phi_s + phi_WTF) . phi_t`. [`policy_impact`] compares slates from a
//! control and a treatment model (typically original vs protected) on
//! diversity of an attribute, topic mix, and interest relevance.

use std::cmp::Ordering;
use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{EntityId, HinGraph, RelationKind};
use crate::probe::AttributeTable;
use crate::rng::{self, stream};
use crate::stats;
use crate::transe::EmbeddingModel;

/// Minimum number of bootstrap replicates accepted.
pub const MIN_BOOTSTRAP: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlateItem {
    pub target: EntityId,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slate {
    pub source: EntityId,
    pub items: Vec<SlateItem>,
}

impl Slate {
    pub fn targets(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.items.iter().map(|it| it.target)
    }
}

/// Top-`k` slate for `source`. Candidates are all entities except the source
/// and its Follow out-neighbours; ties go to the lower entity index.
pub fn rank_slate(model: &EmbeddingModel, source: EntityId, graph: &HinGraph, k: usize) -> Result<Slate> {
    let n = graph.entity_count();
    if model.entity_count() != n {
        return Err(invalid("model and graph have different entity counts"));
    }
    if source.index() >= n {
        return Err(Error::UnknownEntity(format!("#{}", source.0)));
    }
    if k == 0 {
        return Err(invalid("slate size k must be at least 1"));
    }
    let rel = model
        .relation(RelationKind::Wtf)
        .ok_or_else(|| invalid("model has no WTF relation vector"))?;
    let query: Vec<f64> = model.row(source).iter().zip(rel).map(|(a, b)| a + b).collect();

    let mut excluded = vec![false; n];
    excluded[source.index()] = true;
    for &t in graph.out_neighbors(source, RelationKind::Follow) {
        excluded[t.index()] = true;
    }
    let mut cands: Vec<SlateItem> = (0..n)
        .filter(|&i| !excluded[i])
        .map(|i| {
            let target = EntityId::from(i);
            SlateItem {
                target,
                score: stats::dot(&query, model.row(target)),
            }
        })
        .collect();

    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, rank_order);
        cands.truncate(k);
    }
    cands.sort_unstable_by(rank_order);
    Ok(Slate { source, items: cands })
}

/// Slates for many sources, computed in parallel.
pub fn rank_slates(model: &EmbeddingModel, sources: &[EntityId], graph: &HinGraph, k: usize) -> Result<Vec<Slate>> {
    sources.par_iter().map(|&s| rank_slate(model, s, graph, k)).collect()
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlateDiversity {
    /// Population standard deviation over covered items; `None` with fewer
    /// than two covered items.
    pub value: Option<f64>,
    pub uncovered: usize,
}

pub fn slate_diversity(slate: &Slate, attr: &str, table: &AttributeTable) -> Result<SlateDiversity> {
    let col = table.get(attr)?;
    let mut values = Vec::with_capacity(slate.items.len());
    let mut uncovered = 0;
    for t in slate.targets() {
        if t.index() >= table.entity_count() {
            return Err(Error::UnknownEntity(format!("#{}", t.0)));
        }
        match col.value(t.index()) {
            Some(v) => values.push(v),
            None => uncovered += 1,
        }
    }
    let value = (values.len() >= 2).then(|| stats::population_variance(&values).sqrt());
    Ok(SlateDiversity { value, uncovered })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub point: f64,
    pub ci_95: (f64, f64),
}

/// `(mean_t - mean_c) / pooled_sd` with the sample variances pooled.
pub fn cohens_d(treatment: &[f64], control: &[f64]) -> Result<f64> {
    if treatment.len() < 2 || control.len() < 2 {
        return Err(invalid("Cohen's d needs at least two values per group"));
    }
    let (nt, nc) = (treatment.len() as f64, control.len() as f64);
    let pooled = ((nt - 1.0) * stats::sample_variance(treatment) + (nc - 1.0) * stats::sample_variance(control))
        / (nt + nc - 2.0);
    if pooled <= 0.0 || !pooled.is_finite() {
        return Err(Error::Degenerate("pooled variance is zero".into()));
    }
    Ok((stats::mean(treatment) - stats::mean(control)) / pooled.sqrt())
}

/// Cohen's d with a percentile bootstrap CI. Each replicate resamples both
/// groups' users with replacement; the point estimate uses the data as given.
pub fn cohens_d_bootstrap(treatment: &[f64], control: &[f64], b: usize, seed: u64) -> Result<BootstrapEstimate> {
    check_bootstrap(b)?;
    let point = cohens_d(treatment, control)?;
    let reps: Vec<f64> = (0..b)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = rng::seeded(rng::derive(seed, i as u64), stream::BOOTSTRAP);
            let t = resample(treatment, &mut r);
            let c = resample(control, &mut r);
            // A replicate that happens to have zero spread carries no d.
            cohens_d(&t, &c).ok()
        })
        .collect();
    Ok(BootstrapEstimate {
        point,
        ci_95: percentile_ci(reps, point),
    })
}

/// Paired effect size `mean(t - c) / sd(t - c)` with a bootstrap over pairs.
pub fn paired_cohens_d_bootstrap(treatment: &[f64], control: &[f64], b: usize, seed: u64) -> Result<BootstrapEstimate> {
    check_bootstrap(b)?;
    if treatment.len() != control.len() {
        return Err(invalid("paired samples must have equal length"));
    }
    let diffs: Vec<f64> = treatment.iter().zip(control).map(|(t, c)| t - c).collect();
    let dz = |d: &[f64]| -> Result<f64> {
        if d.len() < 2 {
            return Err(invalid("paired Cohen's d needs at least two pairs"));
        }
        let sd = stats::sample_std(d);
        if sd <= 0.0 {
            return Err(Error::Degenerate("paired differences have zero variance".into()));
        }
        Ok(stats::mean(d) / sd)
    };
    let point = dz(&diffs)?;
    let reps: Vec<f64> = (0..b)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = rng::seeded(rng::derive(seed, i as u64), stream::BOOTSTRAP);
            dz(&resample(&diffs, &mut r)).ok()
        })
        .collect();
    Ok(BootstrapEstimate {
        point,
        ci_95: percentile_ci(reps, point),
    })
}

fn check_bootstrap(b: usize) -> Result<()> {
    if b < MIN_BOOTSTRAP {
        return Err(invalid(format!("at least {MIN_BOOTSTRAP} bootstrap replicates are required, got {b}")));
    }
    Ok(())
}

fn resample(xs: &[f64], r: &mut rng::Rng) -> Vec<f64> {
    (0..xs.len()).map(|_| xs[r.random_range(0..xs.len())]).collect()
}

/// 2.5/97.5 percentiles of the replicates, widened if needed so the
/// interval always contains the point estimate.
fn percentile_ci(mut reps: Vec<f64>, point: f64) -> (f64, f64) {
    if reps.is_empty() {
        return (point, point);
    }
    reps.sort_by(f64::total_cmp);
    let lo = stats::quantile_sorted(&reps, 0.025);
    let hi = stats::quantile_sorted(&reps, 0.975);
    (lo.min(point), hi.max(point))
}

/// Per-entity topic distributions; entities without one are skipped when
/// aggregating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicTable {
    n_topics: usize,
    rows: Vec<Option<Vec<f64>>>,
}

impl TopicTable {
    pub fn new(n_topics: usize, rows: Vec<Option<Vec<f64>>>) -> Result<Self> {
        if n_topics == 0 {
            return Err(invalid("topic table needs at least one topic"));
        }
        for (i, row) in rows.iter().enumerate() {
            let Some(row) = row else { continue };
            if row.len() != n_topics {
                return Err(invalid(format!("entity {i} has {} topic weights, expected {n_topics}", row.len())));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(invalid(format!("entity {i} has a negative or non-finite topic weight")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(invalid(format!("topic weights of entity {i} sum to {total}, not 1")));
            }
        }
        Ok(TopicTable { n_topics, rows })
    }

    pub fn n_topics(&self) -> usize {
        self.n_topics
    }

    pub fn entity_count(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, id: EntityId) -> Option<&[f64]> {
        self.rows.get(id.index()).and_then(|r| r.as_deref())
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopicAggregation {
    /// Sum topic distributions over every recommended item of every user.
    #[default]
    Pooled,
    /// Average each user's slate first, then average users.
    PerUserMean,
}

/// Cosine between aggregate topic distributions of control and treatment
/// slates, with a bootstrap over users. Slates are paired by position.
pub fn topic_relevance(
    control: &[Slate],
    treatment: &[Slate],
    topics: &TopicTable,
    aggregation: TopicAggregation,
    b: usize,
    seed: u64,
) -> Result<BootstrapEstimate> {
    check_bootstrap(b)?;
    if control.len() != treatment.len() {
        return Err(invalid("control and treatment must cover the same users"));
    }
    if control.is_empty() {
        return Err(invalid("no slates to compare"));
    }
    let profile = |slates: &[Slate]| -> Vec<Option<Vec<f64>>> {
        slates
            .iter()
            .map(|s| {
                let mut acc = vec![0.0; topics.n_topics];
                let mut count = 0usize;
                for t in s.targets() {
                    if let Some(p) = topics.get(t) {
                        acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
                        count += 1;
                    }
                }
                if count == 0 {
                    return None;
                }
                if aggregation == TopicAggregation::PerUserMean {
                    acc.iter_mut().for_each(|a| *a /= count as f64);
                }
                Some(acc)
            })
            .collect()
    };
    let pc = profile(control);
    let pt = profile(treatment);

    let cosine_of = |users: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut ac = vec![0.0; topics.n_topics];
        let mut at = vec![0.0; topics.n_topics];
        for u in users {
            if let Some(p) = &pc[u] {
                ac.iter_mut().zip(p).for_each(|(a, x)| *a += x);
            }
            if let Some(p) = &pt[u] {
                at.iter_mut().zip(p).for_each(|(a, x)| *a += x);
            }
        }
        stats::cosine(&ac, &at)
    };
    let point = cosine_of(&mut (0..control.len()))
        .ok_or_else(|| Error::Degenerate("no recommended item has a topic distribution".into()))?;
    let n = control.len();
    let reps: Vec<f64> = (0..b)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = rng::seeded(rng::derive(seed, i as u64), stream::BOOTSTRAP);
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            cosine_of(&mut idx.into_iter())
        })
        .collect();
    Ok(BootstrapEstimate {
        point,
        ci_95: percentile_ci(reps, point),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactOptions {
    pub k: usize,
    /// Attribute whose spread within a slate measures diversity.
    pub diversity_attribute: String,
    /// Attribute whose distance between user and recommendees measures
    /// relevance.
    pub interest_attribute: Option<String>,
    pub bootstrap: usize,
    pub seed: u64,
    /// Users to recommend for; all entities when `None`.
    pub users: Option<Vec<EntityId>>,
    pub topic_aggregation: TopicAggregation,
}

impl ImpactOptions {
    pub fn new(k: usize, diversity_attribute: impl Into<String>) -> Self {
        ImpactOptions {
            k,
            diversity_attribute: diversity_attribute.into(),
            interest_attribute: None,
            bootstrap: 1000,
            seed: 0,
            users: None,
            topic_aggregation: TopicAggregation::Pooled,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    /// Per-user slate diversity; `None` where fewer than two items are covered.
    pub diversity_control: Vec<Option<f64>>,
    pub diversity_treatment: Vec<Option<f64>>,
    pub cohens_d: f64,
    pub ci_95: (f64, f64),
    pub topic_cosine: Option<BootstrapEstimate>,
    pub relevance_d: Option<BootstrapEstimate>,
    pub n_users: usize,
    pub k: usize,
    pub bootstrap_b: usize,
}

/// Mean absolute interest distance between a user and their slate, over
/// covered items.
fn interest_distance(slate: &Slate, table: &AttributeTable, attr: &str) -> Result<Option<f64>> {
    let col = table.get(attr)?;
    let Some(own) = col.value(slate.source.index()) else {
        return Ok(None);
    };
    let d: Vec<f64> = slate
        .targets()
        .filter_map(|t| col.value(t.index()))
        .map(|v| (v - own).abs())
        .collect();
    Ok((!d.is_empty()).then(|| stats::mean(&d)))
}

/// Slates from both models for every user, plus the statistics comparing them.
pub fn policy_impact(
    control: &EmbeddingModel,
    treatment: &EmbeddingModel,
    graph: &HinGraph,
    table: &AttributeTable,
    topics: Option<&TopicTable>,
    options: &ImpactOptions,
) -> Result<(ImpactReport, Vec<Slate>, Vec<Slate>)> {
    if control.entity_count() != treatment.entity_count() || control.dim() != treatment.dim() {
        return Err(invalid("control and treatment models must share the entity registry and dimension"));
    }
    if table.entity_count() != graph.entity_count() {
        return Err(invalid("attribute table does not match the graph"));
    }
    check_bootstrap(options.bootstrap)?;
    let users: Vec<EntityId> = match &options.users {
        Some(u) => u.clone(),
        None => (0..graph.entity_count()).map(EntityId::from).collect(),
    };
    let slates_c = rank_slates(control, &users, graph, options.k)?;
    let slates_t = rank_slates(treatment, &users, graph, options.k)?;

    let diversity = |slates: &[Slate]| -> Result<Vec<Option<f64>>> {
        slates
            .iter()
            .map(|s| slate_diversity(s, &options.diversity_attribute, table).map(|d| d.value))
            .collect()
    };
    let div_c = diversity(&slates_c)?;
    let div_t = diversity(&slates_t)?;
    let d = cohens_d_bootstrap(
        &div_t.iter().flatten().copied().collect::<Vec<_>>(),
        &div_c.iter().flatten().copied().collect::<Vec<_>>(),
        options.bootstrap,
        options.seed,
    )?;

    let topic_cosine = topics
        .map(|tt| {
            if tt.entity_count() != graph.entity_count() {
                return Err(invalid("topic table does not match the graph"));
            }
            topic_relevance(
                &slates_c,
                &slates_t,
                tt,
                options.topic_aggregation,
                options.bootstrap,
                rng::derive(options.seed, 1),
            )
        })
        .transpose()?;

    let relevance_d = options
        .interest_attribute
        .as_deref()
        .map(|attr| -> Result<BootstrapEstimate> {
            let dist = |slates: &[Slate]| -> Result<Vec<f64>> {
                Ok(slates
                    .iter()
                    .map(|s| interest_distance(s, table, attr))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .flatten()
                    .collect())
            };
            cohens_d_bootstrap(&dist(&slates_t)?, &dist(&slates_c)?, options.bootstrap, rng::derive(options.seed, 2))
        })
        .transpose()?;

    let report = ImpactReport {
        diversity_control: div_c,
        diversity_treatment: div_t,
        cohens_d: d.point,
        ci_95: d.ci_95,
        topic_cosine,
        relevance_d,
        n_users: users.len(),
        k: options.k,
        bootstrap_b: options.bootstrap,
    };
    Ok((report, slates_c, slates_t))
}

/// Writes slates as `source,rank,target,score` with 1-based ranks.
pub fn write_slates_csv<W: Write>(slates: &[Slate], names: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source", "rank", "target", "score"])?;
    for s in slates {
        for (rank, it) in s.items.iter().enumerate() {
            let name = |id: EntityId| {
                names
                    .get(id.index())
                    .cloned()
                    .ok_or_else(|| Error::UnknownEntity(format!("#{}", id.0)))
            };
            w.write_record([name(s.source)?, (rank + 1).to_string(), name(it.target)?, it.score.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Slate order: higher score first, then lower entity index.
pub fn rank_order(a: &SlateItem, b: &SlateItem) -> Ordering {
    b.score.total_cmp(&a.score).then(a.target.cmp(&b.target))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::graph::Edge;

    fn model_1d(values: &[f64], wtf: f64) -> EmbeddingModel {
        let mut rel = BTreeMap::new();
        rel.insert(RelationKind::Wtf, vec![wtf]);
        rel.insert(RelationKind::Follow, vec![0.0]);
        EmbeddingModel::new(1, values.to_vec(), rel).unwrap()
    }

    fn graph(n: usize, follows: &[(u32, u32)]) -> HinGraph {
        HinGraph::with_entity_count(
            n,
            follows
                .iter()
                .map(|&(s, t)| Edge::new(EntityId(s), RelationKind::Follow, EntityId(t))),
        )
        .unwrap()
    }

    fn slate(targets: &[u32]) -> Slate {
        Slate {
            source: EntityId(0),
            items: targets
                .iter()
                .map(|&t| SlateItem {
                    target: EntityId(t),
                    score: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn top_two_of_three_in_order() {
        // source 0 has query 1; target scores equal their coordinate
        let m = model_1d(&[0.0, 1.0, 3.0, 2.0], 1.0);
        let s = rank_slate(&m, EntityId(0), &graph(4, &[]), 2).unwrap();
        let t: Vec<u32> = s.targets().map(|e| e.0).collect();
        assert_eq!(t, vec![2, 3]);
        assert_eq!(s.items[0].score, 3.0);
    }

    #[test]
    fn k_beyond_candidates_returns_all() {
        let m = model_1d(&[0.0, 1.0, 3.0, 2.0], 1.0);
        let s = rank_slate(&m, EntityId(0), &graph(4, &[]), 10).unwrap();
        assert_eq!(s.items.len(), 3);
    }

    #[test]
    fn followed_and_self_are_excluded() {
        let m = model_1d(&[5.0, 1.0, 3.0, 2.0], 1.0);
        let s = rank_slate(&m, EntityId(0), &graph(4, &[(0, 2)]), 10).unwrap();
        let t: Vec<u32> = s.targets().map(|e| e.0).collect();
        assert_eq!(t, vec![3, 1]);
    }

    #[test]
    fn no_candidates_gives_empty_slate() {
        let m = model_1d(&[0.0, 1.0], 1.0);
        let s = rank_slate(&m, EntityId(0), &graph(2, &[(0, 1)]), 3).unwrap();
        assert!(s.items.is_empty());
        assert!(rank_slate(&m, EntityId(0), &graph(2, &[]), 0).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        let m = model_1d(&[0.0, 1.0, 1.0, 1.0], 1.0);
        let s = rank_slate(&m, EntityId(0), &graph(4, &[]), 2).unwrap();
        let t: Vec<u32> = s.targets().map(|e| e.0).collect();
        assert_eq!(t, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn slate_dominates_excluded_candidates(
            vals in prop::collection::vec(-3.0f64..3.0, 3..30),
            k in 1usize..10,
            follow_mask in prop::collection::vec(any::<bool>(), 30),
        ) {
            let n = vals.len();
            let follows: Vec<(u32, u32)> =
                (1..n).filter(|&i| follow_mask[i]).map(|i| (0, i as u32)).collect();
            let g = graph(n, &follows);
            let m = model_1d(&vals, 0.5);
            let s = rank_slate(&m, EntityId(0), &g, k).unwrap();
            let in_slate: Vec<bool> = (0..n).map(|i| s.targets().any(|t| t.index() == i)).collect();
            for w in s.items.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            let min_score = s.items.last().map(|it| it.score).unwrap_or(f64::INFINITY);
            for i in 1..n {
                let followed = follow_mask[i];
                if followed {
                    prop_assert!(!in_slate[i]);
                } else if !in_slate[i] {
                    prop_assert!(s.items.len() == k);
                    prop_assert!(m.row(EntityId::from(i))[0] * (vals[0] + 0.5) <= min_score);
                }
            }
            prop_assert!(!in_slate[0]);
            let again = rank_slate(&m, EntityId(0), &g, k).unwrap();
            prop_assert_eq!(s, again);
        }
    }

    fn table(values: Vec<Option<f64>>) -> AttributeTable {
        let mut t = AttributeTable::new(values.len());
        t.insert("lr", values).unwrap();
        t
    }

    #[test]
    fn diversity_closed_forms() {
        let t = table(vec![None, Some(0.0), Some(10.0), Some(5.0), Some(5.0), None]);
        assert_eq!(slate_diversity(&slate(&[1, 2]), "lr", &t).unwrap().value, Some(5.0));
        assert_eq!(slate_diversity(&slate(&[3, 4]), "lr", &t).unwrap().value, Some(0.0));
        let d = slate_diversity(&slate(&[1, 3, 2, 5]), "lr", &t).unwrap();
        assert!((d.value.unwrap() - (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(d.uncovered, 1);
        let missing = slate_diversity(&slate(&[1, 5]), "lr", &t).unwrap();
        assert_eq!(missing.value, None);
        assert_eq!(missing.uncovered, 1);
    }

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn identical_samples_have_zero_d() {
        let x = normals(200, 1);
        let e = cohens_d_bootstrap(&x, &x, 500, 3).unwrap();
        assert_eq!(e.point, 0.0);
        assert!(e.ci_95.0 < 0.0 && e.ci_95.1 > 0.0);
    }

    #[test]
    fn one_sd_shift_gives_unit_d() {
        let c = normals(1000, 2);
        let t: Vec<f64> = normals(1000, 5).iter().map(|x| x + 1.0).collect();
        let e = cohens_d_bootstrap(&t, &c, 200, 4).unwrap();
        assert!((e.point - 1.0).abs() < 0.1, "d = {}", e.point);
        assert!(e.ci_95.0 <= e.point && e.point <= e.ci_95.1);
    }

    #[test]
    fn replicate_count_changes_only_the_interval() {
        let c = normals(100, 6);
        let t: Vec<f64> = normals(100, 7).iter().map(|x| x + 0.3).collect();
        let small = cohens_d_bootstrap(&t, &c, 100, 9).unwrap();
        let large = cohens_d_bootstrap(&t, &c, 10_000, 9).unwrap();
        assert_eq!(small.point, large.point);
        assert_ne!(small.ci_95.1 - small.ci_95.0, large.ci_95.1 - large.ci_95.0);
    }

    #[test]
    fn cohens_d_rejects_bad_input() {
        assert!(cohens_d_bootstrap(&[1.0, 2.0], &[1.0, 2.0], 99, 0).is_err());
        assert!(matches!(cohens_d(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::Degenerate(_))));
        assert!(cohens_d(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn paired_d_of_constant_shift_plus_noise() {
        let c = normals(500, 11);
        let noise = normals(500, 12);
        let t: Vec<f64> = c.iter().zip(&noise).map(|(c, e)| c + 0.5 + 0.5 * e).collect();
        let e = paired_cohens_d_bootstrap(&t, &c, 200, 0).unwrap();
        assert!((e.point - 1.0).abs() < 0.15, "dz = {}", e.point);
    }

    fn one_hot(n_topics: usize, topic: usize) -> Option<Vec<f64>> {
        let mut v = vec![0.0; n_topics];
        v[topic] = 1.0;
        Some(v)
    }

    #[test]
    fn topic_cosine_examples() {
        let topics = TopicTable::new(2, (0..201).map(|i| one_hot(2, usize::from(i == 200))).collect()).unwrap();
        let a = vec![slate(&[1, 2, 3])];
        let e = topic_relevance(&a, &a, &topics, TopicAggregation::Pooled, 100, 0).unwrap();
        assert_eq!(e.point, 1.0);

        let disjoint_topics = TopicTable::new(2, vec![None, one_hot(2, 0), one_hot(2, 1)]).unwrap();
        let e = topic_relevance(
            &[slate(&[1])],
            &[slate(&[2])],
            &disjoint_topics,
            TopicAggregation::Pooled,
            100,
            0,
        )
        .unwrap();
        assert_eq!(e.point, 0.0);

        let hundred: Vec<u32> = (1..101).collect();
        let mut swapped = hundred.clone();
        swapped[0] = 200;
        let e = topic_relevance(
            &[slate(&hundred)],
            &[slate(&swapped)],
            &topics,
            TopicAggregation::Pooled,
            100,
            0,
        )
        .unwrap();
        assert!(e.point > 0.99);
        assert!(topic_relevance(&[], &[], &topics, TopicAggregation::Pooled, 100, 0).is_err());
    }

    #[test]
    fn topic_table_validates_rows() {
        assert!(TopicTable::new(2, vec![Some(vec![0.5, 0.6])]).is_err());
        assert!(TopicTable::new(2, vec![Some(vec![1.5, -0.5])]).is_err());
        assert!(TopicTable::new(2, vec![Some(vec![1.0])]).is_err());
        assert!(TopicTable::new(2, vec![Some(vec![0.3, 0.7]), None]).is_ok());
    }

    #[test]
    fn per_user_mean_weights_users_equally() {
        let topics = TopicTable::new(2, vec![None, one_hot(2, 0), one_hot(2, 1), one_hot(2, 1)]).unwrap();
        // user A recommends one topic-0 item, user B three topic-1 items
        let ctl = vec![slate(&[1]), slate(&[2, 3, 2])];
        let trt = vec![slate(&[1]), slate(&[1, 1, 1])];
        let pooled = topic_relevance(&ctl, &trt, &topics, TopicAggregation::Pooled, 100, 0).unwrap();
        let per_user = topic_relevance(&ctl, &trt, &topics, TopicAggregation::PerUserMean, 100, 0).unwrap();
        // pooled: (1,3) vs (4,0); per-user: (1,1) vs (2,0)
        assert!((pooled.point - 4.0 / (10.0f64.sqrt() * 4.0)).abs() < 1e-12);
        assert!((per_user.point - 2.0 / (2.0f64.sqrt() * 2.0)).abs() < 1e-12);
    }

    fn random_model(n: usize, dim: usize, seed: u64) -> EmbeddingModel {
        let mut r = rng::seeded(seed, 0);
        let ent: Vec<f64> = (0..n * dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let mut rel = BTreeMap::new();
        for k in RelationKind::ALL {
            rel.insert(k, (0..dim).map(|_| StandardNormal.sample(&mut r)).collect());
        }
        EmbeddingModel::new(dim, ent, rel).unwrap()
    }

    #[test]
    fn self_comparison_is_neutral() {
        let n = 120;
        let m = random_model(n, 4, 3);
        let g = graph(n, &[(0, 1), (2, 3)]);
        let vals = normals(n, 4);
        let mut t = AttributeTable::new(n);
        t.insert_full("lr", vals.clone()).unwrap();
        t.insert_full("interest", normals(n, 5)).unwrap();
        let topics = TopicTable::new(3, (0..n).map(|i| one_hot(3, i % 3)).collect()).unwrap();
        let mut opts = ImpactOptions::new(50, "lr");
        opts.interest_attribute = Some("interest".into());
        opts.bootstrap = 100;
        opts.users = Some((0..100).map(EntityId).collect());
        let (rep, sc, st) = policy_impact(&m, &m, &g, &t, Some(&topics), &opts).unwrap();
        assert_eq!(rep.cohens_d, 0.0);
        assert_eq!(rep.topic_cosine.unwrap().point, 1.0);
        assert_eq!(rep.relevance_d.unwrap().point, 0.0);
        assert_eq!(rep.n_users, 100);
        assert_eq!(rep.diversity_control.len(), 100);
        assert!(sc.iter().chain(&st).all(|s| s.items.len() <= 50));
        assert_eq!(sc, st);
    }

    #[test]
    fn slates_csv_layout() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let s = Slate {
            source: EntityId(0),
            items: vec![
                SlateItem {
                    target: EntityId(2),
                    score: 1.5,
                },
                SlateItem {
                    target: EntityId(1),
                    score: 0.5,
                },
            ],
        };
        let mut buf = Vec::new();
        write_slates_csv(&[s], &names, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "source,rank,target,score\na,1,c,1.5\na,2,b,0.5\n");
    }
}
