//! Link-prediction metrics and heuristic baselines.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Edge, EntityId, HinGraph, RelationKind};
use crate::rng::{self, stream};
use crate::transe::EmbeddingModel;

/// Scores with binary labels (`true` = positive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabelSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabelSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(invalid(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(invalid("scores contain NaN"));
        }
        Ok(ScoredLabelSet { scores, labels })
    }

    /// Positives first, then negatives.
    pub fn from_groups(positive: &[f64], negative: &[f64]) -> Result<Self> {
        let scores = positive.iter().chain(negative).copied().collect();
        let labels = std::iter::repeat_n(true, positive.len())
            .chain(std::iter::repeat_n(false, negative.len()))
            .collect();
        Self::new(scores, labels)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn class_counts(&self) -> (u64, u64) {
        let p = self.labels.iter().filter(|&&l| l).count() as u64;
        (p, self.labels.len() as u64 - p)
    }
}

/// `P(score_pos > score_neg) + P(tie) / 2`, from exact integer counts.
pub fn auc_roc(data: &ScoredLabelSet) -> Result<f64> {
    let (p, n) = data.class_counts();
    if p == 0 || n == 0 {
        return Err(Error::Degenerate("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));
    // Twice the number of (pos, neg) wins, so half credits stay integral.
    let mut twice_wins: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < order.len() && data.scores[order[j]] == data.scores[order[i]] {
            if data.labels[order[j]] {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        twice_wins += gp as u128 * (2 * neg_below as u128 + gn as u128);
        neg_below += gn;
        i = j;
    }
    Ok(twice_wins as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Held-out WTF positives, each paired with one non-recommended second
/// neighbour of its source drawn as a negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldoutPairs {
    pub positives: Vec<Edge>,
    pub negatives: Vec<Edge>,
    /// Positives dropped because their source had no candidate.
    pub skipped: usize,
}

impl HeldoutPairs {
    pub fn sample(graph: &HinGraph, positives: &[Edge], seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed, stream::HELDOUT);
        let mut out = HeldoutPairs {
            positives: Vec::new(),
            negatives: Vec::new(),
            skipped: 0,
        };
        for e in positives {
            if e.source.index() >= graph.entity_count() || e.target.index() >= graph.entity_count() {
                return Err(Error::UnknownEntity(format!("#{}", e.source.0.max(e.target.0))));
            }
            let mut cands = graph.non_recommended_second_neighbors(e.source);
            cands.retain(|&c| c != e.target);
            if cands.is_empty() {
                out.skipped += 1;
                continue;
            }
            let t = cands[rng.random_range(0..cands.len())];
            out.positives.push(*e);
            out.negatives.push(Edge::new(e.source, RelationKind::Wtf, t));
        }
        if out.positives.is_empty() {
            return Err(Error::Degenerate("no held-out positive has a second-neighbour candidate".into()));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    /// Scores both sides with `score` and labels them.
    pub fn scored(&self, mut score: impl FnMut(&Edge) -> Result<f64>) -> Result<ScoredLabelSet> {
        let pos = self.positives.iter().map(&mut score).collect::<Result<Vec<_>>>()?;
        let neg = self.negatives.iter().map(&mut score).collect::<Result<Vec<_>>>()?;
        ScoredLabelSet::from_groups(&pos, &neg)
    }
}

/// WTF-score AUC of `model` on held-out pairs.
pub fn model_auc(model: &EmbeddingModel, pairs: &HeldoutPairs) -> Result<f64> {
    auc_roc(&pairs.scored(|e| model.score(&wtf(e)))?)
}

fn wtf(e: &Edge) -> Edge {
    Edge::new(e.source, RelationKind::Wtf, e.target)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Uniformly random ranking of second neighbours.
    RandomSecond,
    /// Second neighbours with the most followers first.
    MostFollowers,
    /// Second neighbours followed by most of the source's friends first.
    MostCoFollowed,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::RandomSecond,
        BaselineKind::MostFollowers,
        BaselineKind::MostCoFollowed,
    ];
}

/// Number of `source`'s Follow friends that follow `target`.
pub fn co_followers(graph: &HinGraph, source: EntityId, target: EntityId) -> usize {
    graph
        .out_neighbors(source, RelationKind::Follow)
        .iter()
        .filter(|&&f| graph.contains(&Edge::new(f, RelationKind::Follow, target)))
        .count()
}

/// AUC of a heuristic ranker on held-out WTF positives against sampled
/// non-recommended second neighbours.
pub fn baseline_auc(graph: &HinGraph, test: &[Edge], kind: BaselineKind, seed: u64) -> Result<f64> {
    let pairs = HeldoutPairs::sample(graph, test, seed)?;
    baseline_auc_on(graph, &pairs, kind, seed)
}

/// Same as [`baseline_auc`] on pre-sampled pairs, so several rankers can be
/// compared on identical negatives.
pub fn baseline_auc_on(graph: &HinGraph, pairs: &HeldoutPairs, kind: BaselineKind, seed: u64) -> Result<f64> {
    let mut rng = rng::seeded(seed, stream::BASELINE);
    let data = pairs.scored(|e| {
        Ok(match kind {
            BaselineKind::RandomSecond => rng.random::<f64>(),
            BaselineKind::MostFollowers => graph.in_degree(e.target, RelationKind::Follow) as f64,
            BaselineKind::MostCoFollowed => co_followers(graph, e.source, e.target) as f64,
        })
    })?;
    auc_roc(&data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAtK {
    pub value: f64,
    pub n_cases: usize,
    /// Cases whose source had fewer than `pool_size` candidates.
    pub skipped: usize,
}

/// Fraction of held-out positives ranked within the top `k` of a pool of
/// `pool_size` non-recommended second neighbours. Equal scores are broken
/// by entity index.
pub fn precision_at_k(
    model: &EmbeddingModel,
    positives: &[Edge],
    graph: &HinGraph,
    pool_size: usize,
    k: usize,
    seed: u64,
) -> Result<PrecisionAtK> {
    if k == 0 || pool_size == 0 {
        return Err(invalid("pool size and k must be at least 1"));
    }
    let outcomes: Vec<Option<bool>> = positives
        .par_iter()
        .enumerate()
        .map(|(case, e)| -> Result<Option<bool>> {
            let mut cands = graph.non_recommended_second_neighbors(e.source);
            cands.retain(|&c| c != e.target);
            if cands.len() < pool_size {
                return Ok(None);
            }
            let mut rng = rng::seeded(rng::derive(seed, case as u64), stream::HELDOUT);
            let target_score = model.score(&wtf(e))?;
            let mut ahead = 0;
            for i in index::sample(&mut rng, cands.len(), pool_size) {
                let c = cands[i];
                let s = model.score(&Edge::new(e.source, RelationKind::Wtf, c))?;
                if s > target_score || (s == target_score && c < e.target) {
                    ahead += 1;
                }
            }
            Ok(Some(ahead < k))
        })
        .collect::<Result<_>>()?;
    let hits: Vec<bool> = outcomes.iter().flatten().copied().collect();
    if hits.is_empty() {
        return Err(Error::Degenerate(format!(
            "no held-out case has {pool_size} candidates"
        )));
    }
    Ok(PrecisionAtK {
        value: hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64,
        n_cases: hits.len(),
        skipped: outcomes.len() - hits.len(),
    })
}

/// Equal-frequency bin of every score; tied scores share a bin.
fn quantile_bins(scores: &[f64], bins: usize) -> Vec<usize> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut out = vec![0; n];
    let mut i = 0;
    while i < n {
        let bin = i * bins / n;
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            out[order[j]] = bin;
            j += 1;
        }
        i = j;
    }
    out
}

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Normalised mutual information between binned scores and labels,
/// `I / ((H(bin) + H(label)) / 2)`. Zero when either side is constant.
pub fn nmi(data: &ScoredLabelSet, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(invalid("NMI needs at least 2 bins"));
    }
    let n = data.len();
    if n == 0 {
        return Err(invalid("NMI of an empty set"));
    }
    let assigned = quantile_bins(&data.scores, bins);
    let mut joint = vec![[0usize; 2]; bins];
    for (b, &l) in assigned.iter().zip(&data.labels) {
        joint[*b][l as usize] += 1;
    }
    let total = n as f64;
    let h_bin = entropy(joint.iter().map(|c| c[0] + c[1]), total);
    let h_label = entropy((0..2).map(|l| joint.iter().map(|c| c[l]).sum()), total);
    if h_bin == 0.0 || h_label == 0.0 {
        return Ok(0.0);
    }
    let h_joint = entropy(joint.iter().flat_map(|c| c.iter().copied()), total);
    let mi = (h_bin + h_label - h_joint).max(0.0);
    Ok((2.0 * mi / (h_bin + h_label)).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmiComparison {
    pub nmi_a: f64,
    pub nmi_b: f64,
    /// `1 - nmi_b / nmi_a`; `None` when `nmi_a` is zero and `nmi_b` is not.
    pub relative_drop: Option<f64>,
}

pub fn informativeness_nmi(a: &ScoredLabelSet, b: &ScoredLabelSet, bins: usize) -> Result<NmiComparison> {
    let nmi_a = nmi(a, bins)?;
    let nmi_b = nmi(b, bins)?;
    let relative_drop = if nmi_a == nmi_b {
        Some(0.0)
    } else if nmi_a == 0.0 {
        None
    } else {
        Some(1.0 - nmi_b / nmi_a)
    };
    Ok(NmiComparison {
        nmi_a,
        nmi_b,
        relative_drop,
    })
}

/// Probability that a scorer ignorant of the labels reaches the observed
/// AUC: labels are shuffled `n_perm` times and the add-one p-value of
/// `AUC_perm >= AUC_obs` is returned.
pub fn random_baseline_pvalue(data: &ScoredLabelSet, n_perm: usize, seed: u64) -> Result<f64> {
    if n_perm == 0 {
        return Err(invalid("need at least one permutation"));
    }
    let observed = auc_roc(data)?;
    let exceed: usize = (0..n_perm)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut rng = rng::seeded(rng::derive(seed, i as u64), stream::PERMUTATION);
            let mut labels = data.labels.clone();
            labels.shuffle(&mut rng);
            let perm = ScoredLabelSet {
                scores: data.scores.clone(),
                labels,
            };
            Ok(usize::from(auc_roc(&perm)? >= observed))
        })
        .sum::<Result<usize>>()?;
    Ok((1 + exceed) as f64 / (1 + n_perm) as f64)
}

/// One evaluation result as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub n_cases: usize,
    pub skipped: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredLabelSet {
        ScoredLabelSet::new(scores.to_vec(), labels.iter().map(|&l| l == 1).collect()).unwrap()
    }

    fn brute_auc(d: &ScoredLabelSet) -> f64 {
        let (mut twice, mut pairs) = (0u128, 0u128);
        for (i, &li) in d.labels.iter().enumerate() {
            for (j, &lj) in d.labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1;
                    twice += match d.scores[i].partial_cmp(&d.scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&set(&[1.0, 2.0, 3.0], &[0, 0, 1])).unwrap(), 1.0);
        assert_eq!(auc_roc(&set(&[4.0; 6], &[0, 1, 0, 1, 1, 0])).unwrap(), 0.5);
        assert!(auc_roc(&set(&[1.0, 2.0], &[1, 1])).is_err());
    }

    #[test]
    fn auc_matches_pair_count_on_random_data() {
        let mut r = rng::seeded(1, 0);
        let n = 1000;
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0..200) as f64) / 7.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| r.random()).collect();
        let d = ScoredLabelSet::new(scores, labels).unwrap();
        assert_eq!(auc_roc(&d).unwrap(), brute_auc(&d));
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in prop::collection::vec((0u8..20, any::<bool>()), 2..80),
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = ScoredLabelSet::new(scores.clone(), labels.clone()).unwrap();
            let b = ScoredLabelSet::new(scores.iter().map(|s| (s * 0.5).exp() - 3.0).collect(), labels).unwrap();
            prop_assert_eq!(auc_roc(&a).unwrap(), auc_roc(&b).unwrap());
            prop_assert_eq!(auc_roc(&a).unwrap(), brute_auc(&a));
        }

        #[test]
        fn nmi_invariant_under_monotone_transform(
            raw in prop::collection::vec((0u8..30, any::<bool>()), 4..100),
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
            let a = ScoredLabelSet::new(scores.clone(), labels.clone()).unwrap();
            let b = ScoredLabelSet::new(scores.iter().map(|s| s.powi(3) + 1.0).collect(), labels).unwrap();
            prop_assert_eq!(nmi(&a, 8).unwrap(), nmi(&b, 8).unwrap());
        }
    }

    #[test]
    fn nmi_is_invariant_to_bin_permutation() {
        let d = set(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], &[0, 0, 1, 0, 1, 1, 0, 1]);
        // Map each bin to a permuted bin label by remapping scores bin-wise.
        let bins = quantile_bins(&d.scores, 4);
        let relabel = [2.0, 0.0, 3.0, 1.0];
        let permuted: Vec<f64> = bins.iter().map(|&b| relabel[b]).collect();
        let p = ScoredLabelSet::new(permuted, d.labels.clone()).unwrap();
        // Same partition (one score value per former bin) → same NMI.
        let with_four = nmi(&d, 4).unwrap();
        assert!((with_four - nmi(&p, 4).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn nmi_examples() {
        let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        assert!((nmi(&set(&scores, &labels), 16).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&set(&[3.0; 10], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]), 4).unwrap(), 0.0);
        assert!(nmi(&set(&scores, &labels), 1).is_err());

        let mut r = rng::seeded(2, 0);
        let n = 10_000;
        let d = ScoredLabelSet::new((0..n).map(|_| r.random()).collect(), (0..n).map(|_| r.random()).collect()).unwrap();
        assert!(nmi(&d, 16).unwrap() < 0.01);

        let same = informativeness_nmi(&d, &d, 16).unwrap();
        assert_eq!(same.relative_drop, Some(0.0));
    }

    fn rel(dim: usize) -> BTreeMap<RelationKind, Vec<f64>> {
        BTreeMap::from([(RelationKind::Wtf, vec![0.0; dim]), (RelationKind::Follow, vec![0.0; dim])])
    }

    /// Source 0 follows 1..=3, each of which follows 4..=13; WTF 0 -> 4.
    fn fan() -> HinGraph {
        let f = RelationKind::Follow;
        let mut edges = vec![Edge::new(EntityId(0), RelationKind::Wtf, EntityId(4))];
        for a in 1..=3u32 {
            edges.push(Edge::new(EntityId(0), f, EntityId(a)));
            for t in 4..=13u32 {
                edges.push(Edge::new(EntityId(a), f, EntityId(t)));
            }
        }
        HinGraph::with_entity_count(14, edges).unwrap()
    }

    fn scored_model(target_scores: &[f64]) -> EmbeddingModel {
        // 1-d: phi_0 = 1 so f(0, t) = phi_t.
        let mut ent = vec![1.0, 0.0, 0.0, 0.0];
        ent.extend_from_slice(target_scores);
        EmbeddingModel::new(1, ent, rel(1)).unwrap()
    }

    #[test]
    fn precision_examples() {
        let g = fan();
        let test = [Edge::new(EntityId(0), RelationKind::Wtf, EntityId(4))];
        // Target 4 beats all nine alternatives.
        let mut s = vec![10.0];
        s.extend((5..=13).map(|t| t as f64 * 0.1));
        let p = precision_at_k(&scored_model(&s), &test, &g, 9, 1, 3).unwrap();
        assert_eq!((p.value, p.n_cases, p.skipped), (1.0, 1, 0));

        // Target ranked 5th among the pool.
        let mut s = vec![5.5];
        s.extend((5..=13).map(|t| t as f64 - 4.0));
        let p = precision_at_k(&scored_model(&s), &test, &g, 9, 3, 3).unwrap();
        assert_eq!(p.value, 0.0);
        let p = precision_at_k(&scored_model(&s), &test, &g, 9, 5, 3).unwrap();
        assert_eq!(p.value, 1.0);
        // k beyond the pool always hits.
        let p = precision_at_k(&scored_model(&s), &test, &g, 9, 10, 3).unwrap();
        assert_eq!(p.value, 1.0);
        // Pool too large: every case skipped.
        assert!(precision_at_k(&scored_model(&s), &test, &g, 20, 3, 3).is_err());
    }

    #[test]
    fn precision_monotone_in_k() {
        let g = fan();
        let test = [Edge::new(EntityId(0), RelationKind::Wtf, EntityId(4))];
        let mut r = rng::seeded(4, 0);
        for _ in 0..20 {
            let s: Vec<f64> = (0..10).map(|_| r.random()).collect();
            let m = scored_model(&s);
            let mut last = 0.0;
            for k in 1..=9 {
                let v = precision_at_k(&m, &test, &g, 6, k, 1).unwrap().value;
                assert!(v >= last);
                last = v;
            }
        }
    }

    #[test]
    fn baselines_on_fan() {
        let g = fan();
        let test = [Edge::new(EntityId(0), RelationKind::Wtf, EntityId(4))];
        // All second neighbours have three followers and three co-followers.
        assert_eq!(baseline_auc(&g, &test, BaselineKind::MostFollowers, 0).unwrap(), 0.5);
        assert_eq!(baseline_auc(&g, &test, BaselineKind::MostCoFollowed, 0).unwrap(), 0.5);
    }

    #[test]
    fn random_baseline_pvalue_bounds() {
        let d = set(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0, 0, 0, 1, 1, 1]);
        let p = random_baseline_pvalue(&d, 99, 0).unwrap();
        assert!((1.0 / 100.0..0.2).contains(&p));
        let flat = set(&[1.0; 6], &[0, 0, 0, 1, 1, 1]);
        assert_eq!(random_baseline_pvalue(&flat, 50, 0).unwrap(), 1.0);
    }
}
