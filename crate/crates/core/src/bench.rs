//! Synthetic worlds with known ground truth, dataset perturbations, and
//! affine comparison of embeddings.
//!
//! A world draws isotropic Gaussian positions `Phi*`, links entities by
//! Bernoulli Follow edges whose log-odds are the TransE score plus a bias
//! tuned to a target density, lets a random subset of volunteers receive WTF
//! slates made of their best-scoring second neighbours, and plants attributes
//! along chosen directions with a chosen correlation.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Edge, EntityId, HinGraph, RelationKind};
use crate::probe::AttributeTable;
use crate::recommend::TopicTable;
use crate::rng::{self, stream};
use crate::scaling::{BipartiteGraph, HomophilyModel};
use crate::stats;
use crate::transe::EmbeddingModel;

/// Noise added to planted attributes, always scaled to unit variance.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NoiseLaw {
    #[default]
    Gaussian,
    /// Heavy-tailed; needs `dof > 2` for finite variance.
    StudentT { dof: f64 },
}

impl NoiseLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseLaw::Gaussian => Ok(()),
            NoiseLaw::StudentT { dof } if dof > 2.0 && dof.is_finite() => Ok(()),
            NoiseLaw::StudentT { dof } => Err(invalid(format!("Student-t noise needs dof > 2, got {dof}"))),
        }
    }

    fn sample(&self, n: usize, r: &mut rng::Rng) -> Vec<f64> {
        match *self {
            NoiseLaw::Gaussian => (0..n).map(|_| StandardNormal.sample(r)).collect(),
            NoiseLaw::StudentT { dof } => {
                let t = StudentT::new(dof).expect("validated");
                let scale = ((dof - 2.0) / dof).sqrt();
                (0..n).map(|_| scale * t.sample(r)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedAttribute {
    pub name: String,
    /// Unit direction in the true space; drawn at random when absent.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    pub correlation: f64,
    #[serde(default)]
    pub noise: NoiseLaw,
}

impl PlantedAttribute {
    pub fn new(name: impl Into<String>, correlation: f64) -> Self {
        PlantedAttribute {
            name: name.into(),
            direction: None,
            correlation,
            noise: NoiseLaw::Gaussian,
        }
    }
}

/// Topic distributions driven by random directions orthogonal to every
/// planted attribute, so topics carry no information about the attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub n_topics: usize,
    /// Softmax inverse temperature applied to standardized projections.
    pub sharpness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub n_entities: usize,
    pub dim_true: usize,
    /// Expected fraction of ordered pairs joined by a Follow edge.
    pub follow_density: f64,
    /// Standard deviation of the Follow score `phi_s . phi_t` across pairs;
    /// sets the scale of `Phi*` and thereby the strength of homophily.
    pub affinity_sd: f64,
    /// Per-coordinate standard deviation of the relation vectors, relative
    /// to the entity scale.
    pub relation_scale: f64,
    pub planted_attributes: Vec<PlantedAttribute>,
    pub volunteer_fraction: f64,
    pub wtf_slate_size: usize,
    pub topics: Option<TopicSpec>,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            n_entities: 2000,
            dim_true: 32,
            follow_density: 0.01,
            affinity_sd: 2.0,
            relation_scale: 0.0,
            planted_attributes: vec![PlantedAttribute::new("planted", 0.9)],
            volunteer_fraction: 0.5,
            wtf_slate_size: 5,
            topics: None,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_entities < 2 || self.dim_true == 0 {
            return Err(invalid("a world needs at least two entities and one dimension"));
        }
        if !(self.follow_density > 0.0 && self.follow_density < 1.0) {
            return Err(invalid("follow_density must lie in (0, 1)"));
        }
        if !(self.affinity_sd > 0.0) || !(self.relation_scale >= 0.0) {
            return Err(invalid("affinity_sd must be positive and relation_scale non-negative"));
        }
        if !(0.0..=1.0).contains(&self.volunteer_fraction) {
            return Err(invalid("volunteer_fraction must lie in [0, 1]"));
        }
        let mut seen = HashSet::new();
        for a in &self.planted_attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(invalid(format!("attribute `{}` is planted twice", a.name)));
            }
            if !(0.0..=1.0).contains(&a.correlation) {
                return Err(invalid(format!("correlation of `{}` must lie in [0, 1]", a.name)));
            }
            a.noise.validate()?;
            if let Some(w) = &a.direction {
                if w.len() != self.dim_true {
                    return Err(invalid(format!("direction of `{}` has the wrong length", a.name)));
                }
                if (stats::norm(w) - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("direction of `{}` is not unit-norm", a.name)));
                }
            }
        }
        if let Some(t) = &self.topics {
            if t.n_topics == 0 || !(t.sharpness >= 0.0) {
                return Err(invalid("topics need n_topics >= 1 and non-negative sharpness"));
            }
        }
        Ok(())
    }

    /// Per-coordinate standard deviation of `Phi*`.
    pub fn entity_scale(&self) -> f64 {
        // Var(phi_s . phi_t) = d * s^4 for independent N(0, s^2) coordinates.
        (self.affinity_sd * self.affinity_sd / self.dim_true as f64).powf(0.25)
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub graph: HinGraph,
    pub truth: EmbeddingModel,
    pub attributes: AttributeTable,
    /// Planted unit direction per attribute.
    pub directions: BTreeMap<String, Vec<f64>>,
    pub volunteers: Vec<EntityId>,
    pub topics: Option<TopicTable>,
    pub follow_bias: f64,
}

fn random_unit(d: usize, r: &mut rng::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
        let n = stats::norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn standardized(xs: &[f64]) -> Vec<f64> {
    let m = stats::mean(xs);
    let sd = stats::population_variance(xs).sqrt();
    if sd == 0.0 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - m) / sd).collect()
}

/// `a = c * standardize(Phi w) + sqrt(1 - c^2) * noise`.
pub fn plant_attribute(phi: &DMatrix<f64>, direction: &[f64], c: f64, noise: NoiseLaw, seed: u64) -> Result<Vec<f64>> {
    if direction.len() != phi.ncols() {
        return Err(invalid("direction does not match the embedding dimension"));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(invalid("correlation must lie in [0, 1]"));
    }
    noise.validate()?;
    let proj: Vec<f64> = phi.row_iter().map(|row| stats::dot(row.transpose().as_slice(), direction)).collect();
    let signal = standardized(&proj);
    let mut r = rng::seeded(seed, stream::WORLD);
    let eps = noise.sample(phi.nrows(), &mut r);
    let s = (1.0 - c * c).max(0.0).sqrt();
    Ok(signal.iter().zip(&eps).map(|(a, e)| c * a + s * e).collect())
}

const BIAS_BOUND: f64 = 60.0;
const BIAS_SAMPLE_PAIRS: usize = 1_000_000;

/// Bias giving the target expected density over `scores`, by bisection.
fn tune_bias(scores: &[f64], target: f64) -> Result<f64> {
    let density = |b: f64| scores.iter().map(|s| stats::sigmoid(s + b)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-BIAS_BOUND, BIAS_BOUND);
    if density(lo) > target || density(hi) < target {
        return Err(Error::Degenerate(format!(
            "follow density {target} is unattainable with bias in [-{BIAS_BOUND}, {BIAS_BOUND}]"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if density(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let (n, d) = (spec.n_entities, spec.dim_true);
    let scale = spec.entity_scale();
    let mut r = rng::seeded(spec.seed, stream::WORLD);
    let coord = Normal::new(0.0, scale).expect("positive scale");
    let phi = DMatrix::from_fn(n, d, |_, _| coord.sample(&mut r));
    let rel_coord = Normal::new(0.0, scale * spec.relation_scale.max(f64::MIN_POSITIVE)).expect("positive scale");
    let mut relations = BTreeMap::new();
    for k in RelationKind::ALL {
        let v: Vec<f64> = (0..d)
            .map(|_| if spec.relation_scale > 0.0 { rel_coord.sample(&mut r) } else { 0.0 })
            .collect();
        relations.insert(k, v);
    }
    let truth = EmbeddingModel::from_matrix(&phi, relations)?.with_seed(spec.seed);
    let follow_rel = truth.relation(RelationKind::Follow).expect("inserted").to_vec();

    let follow_score = |s: usize, t: usize| -> f64 {
        let (ps, pt) = (truth.row(EntityId::from(s)), truth.row(EntityId::from(t)));
        ps.iter().zip(&follow_rel).zip(pt).map(|((a, b), c)| (a + b) * c).sum()
    };
    let total_pairs = n * (n - 1);
    let sample: Vec<f64> = if total_pairs <= BIAS_SAMPLE_PAIRS {
        (0..n)
            .flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t)))
            .map(|(s, t)| follow_score(s, t))
            .collect()
    } else {
        (0..BIAS_SAMPLE_PAIRS)
            .map(|_| {
                let s = r.random_range(0..n);
                let mut t = r.random_range(0..n - 1);
                if t >= s {
                    t += 1;
                }
                follow_score(s, t)
            })
            .collect()
    };
    let bias = tune_bias(&sample, spec.follow_density)?;

    let follows: Vec<Edge> = (0..n)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut rs = rng::seeded(rng::derive(spec.seed, s as u64), stream::WORLD);
            let mut out = Vec::new();
            for t in 0..n {
                if t != s && rs.random::<f64>() < stats::sigmoid(follow_score(s, t) + bias) {
                    out.push(Edge::new(EntityId::from(s), RelationKind::Follow, EntityId::from(t)));
                }
            }
            out
        })
        .collect();
    let follow_graph = HinGraph::with_entity_count(n, follows.iter().copied())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let n_vol = (spec.volunteer_fraction * n as f64).round() as usize;
    let mut volunteers: Vec<EntityId> = order[..n_vol].iter().map(|&i| EntityId::from(i)).collect();
    volunteers.sort_unstable();

    let wtf_rel = truth.relation(RelationKind::Wtf).expect("inserted");
    let wtf: Vec<Edge> = volunteers
        .par_iter()
        .flat_map_iter(|&s| {
            let q: Vec<f64> = truth.row(s).iter().zip(wtf_rel).map(|(a, b)| a + b).collect();
            let mut cands: Vec<(f64, EntityId)> = follow_graph
                .second_neighbors_unchecked(s, RelationKind::Follow)
                .into_iter()
                .map(|t| (stats::dot(&q, truth.row(t)), t))
                .collect();
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            cands.truncate(spec.wtf_slate_size);
            cands.into_iter().map(move |(_, t)| Edge::new(s, RelationKind::Wtf, t))
        })
        .collect();
    let graph = follow_graph.with_edges(follows.into_iter().chain(wtf))?;

    let mut attributes = AttributeTable::new(n);
    let mut directions = BTreeMap::new();
    for (k, a) in spec.planted_attributes.iter().enumerate() {
        let w = a.direction.clone().unwrap_or_else(|| random_unit(d, &mut r));
        let values = plant_attribute(&phi, &w, a.correlation, a.noise, rng::derive(spec.seed, 1000 + k as u64))?;
        attributes.insert_full(a.name.clone(), values)?;
        directions.insert(a.name.clone(), w);
    }

    let topics = match &spec.topics {
        None => None,
        Some(ts) => Some(plant_topics(&phi, ts, directions.values(), &mut r)?),
    };

    Ok(World {
        graph,
        truth,
        attributes,
        directions,
        volunteers,
        topics,
        follow_bias: bias,
    })
}

fn plant_topics<'a>(
    phi: &DMatrix<f64>,
    spec: &TopicSpec,
    avoid: impl Iterator<Item = &'a Vec<f64>>,
    r: &mut rng::Rng,
) -> Result<TopicTable> {
    let d = phi.ncols();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let add = |v: Vec<f64>, basis: &mut Vec<Vec<f64>>| -> Option<Vec<f64>> {
        let mut v = v;
        for _ in 0..2 {
            for b in basis.iter() {
                let c = stats::dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nv = stats::norm(&v);
        (nv > 1e-8).then(|| {
            let u: Vec<f64> = v.iter().map(|x| x / nv).collect();
            basis.push(u.clone());
            u
        })
    };
    for w in avoid {
        add(w.clone(), &mut basis);
    }
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(spec.n_topics);
    for k in 0..spec.n_topics {
        let fresh = if basis.len() < d {
            (0..100).find_map(|_| add(random_unit(d, r), &mut basis))
        } else {
            None
        };
        // Once the orthogonal complement is used up, topics cycle through it.
        let u = match fresh {
            Some(u) => u,
            None if !dirs.is_empty() => dirs[k % dirs.len()].clone(),
            None => return Err(Error::Degenerate("no dimensions remain for topics".into())),
        };
        dirs.push(u);
    }
    let cols: Vec<Vec<f64>> = dirs
        .iter()
        .map(|u| standardized(&phi.row_iter().map(|row| stats::dot(row.transpose().as_slice(), u)).collect::<Vec<_>>()))
        .collect();
    let rows = (0..phi.nrows())
        .map(|i| {
            let logits: Vec<f64> = cols.iter().map(|c| spec.sharpness * c[i]).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            Some(e.into_iter().map(|x| x / z).collect())
        })
        .collect();
    TopicTable::new(spec.n_topics, rows)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Drop `floor(m * |Follow|)` Follow edges uniformly.
    RemoveFollow,
    /// Add `floor(m * |WTF|)` WTF edges from existing WTF sources to their
    /// non-recommended second neighbours.
    AddArtificialWtf,
    /// Drop every WTF edge of a random `floor(m * sources)` subset of WTF
    /// sources, emulating a smaller volunteer pool. Follow edges are kept.
    SubsetSources,
    /// Split all edges into two graphs by a random half; `m` is unused.
    PartitionHalf,
}

/// Guards `floor(m * count)` against products like `0.369 * 1000` landing
/// a hair below an integer.
fn fraction_of(m: f64, count: usize) -> usize {
    (m * count as f64 + 1e-9).floor() as usize
}

/// Perturbed copies of `graph`: one graph, or two for [`Perturbation::PartitionHalf`].
pub fn perturb_dataset(graph: &HinGraph, kind: Perturbation, magnitude: f64, seed: u64) -> Result<Vec<HinGraph>> {
    if !(0.0..=1.0).contains(&magnitude) {
        return Err(invalid("perturbation magnitude must lie in [0, 1]"));
    }
    let mut r = rng::seeded(seed, stream::PERTURB);
    let follows: Vec<Edge> = graph.edges(RelationKind::Follow).collect();
    let wtf: Vec<Edge> = graph.edges(RelationKind::Wtf).collect();
    match kind {
        Perturbation::RemoveFollow => {
            let mut f = follows;
            f.shuffle(&mut r);
            let drop = fraction_of(magnitude, f.len());
            let kept = f[drop..].iter().copied();
            Ok(vec![graph.with_edges(kept.chain(wtf))?])
        }
        Perturbation::AddArtificialWtf => {
            let need = fraction_of(magnitude, wtf.len());
            let mut added: HashSet<Edge> = HashSet::with_capacity(need);
            let max_attempts = 100 * need.max(1);
            let mut attempts = 0;
            while added.len() < need {
                attempts += 1;
                if attempts > max_attempts {
                    return Err(Error::Degenerate(format!(
                        "only {} of {need} artificial WTF edges could be placed",
                        added.len()
                    )));
                }
                let s = wtf[r.random_range(0..wtf.len())].source;
                let cands = graph.non_recommended_second_neighbors(s);
                if cands.is_empty() {
                    continue;
                }
                let t = cands[r.random_range(0..cands.len())];
                let e = Edge::new(s, RelationKind::Wtf, t);
                if !graph.contains(&Edge::new(s, RelationKind::Follow, t)) {
                    added.insert(e);
                }
            }
            let mut extra: Vec<Edge> = added.into_iter().collect();
            extra.sort_unstable();
            Ok(vec![graph.with_edges(follows.into_iter().chain(wtf).chain(extra))?])
        }
        Perturbation::SubsetSources => {
            let mut sources: Vec<EntityId> = wtf.iter().map(|e| e.source).collect();
            sources.dedup();
            sources.shuffle(&mut r);
            let dropped: HashSet<EntityId> = sources[..fraction_of(magnitude, sources.len())].iter().copied().collect();
            let kept = wtf.into_iter().filter(|e| !dropped.contains(&e.source));
            Ok(vec![graph.with_edges(follows.into_iter().chain(kept))?])
        }
        Perturbation::PartitionHalf => {
            let mut all: Vec<Edge> = follows.into_iter().chain(wtf).collect();
            all.shuffle(&mut r);
            let (a, b) = all.split_at(all.len() / 2);
            Ok(vec![graph.with_edges(a.iter().copied())?, graph.with_edges(b.iter().copied())?])
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineAlignment {
    /// Row-major `d × d`; aligned rows are `phi_ref_i A + b`.
    pub transform: Vec<f64>,
    pub offset: Vec<f64>,
    /// Coefficient of determination averaged over the `d` output columns.
    pub r2: f64,
    pub cosine_mean: f64,
    pub cosine_q025: f64,
    pub cosine_q975: f64,
}

/// Least-squares affine map taking `phi_ref` onto `phi_var`, with fit and
/// per-entity cosine summaries.
pub fn affine_align(phi_ref: &DMatrix<f64>, phi_var: &DMatrix<f64>) -> Result<AffineAlignment> {
    let (n, d) = phi_ref.shape();
    if phi_var.shape() != (n, d) {
        return Err(invalid("embeddings must have equal shapes"));
    }
    if n <= d {
        return Err(invalid("affine alignment needs more entities than dimensions"));
    }
    let mut x = DMatrix::from_element(n, d + 1, 1.0);
    x.view_mut((0, 0), (n, d)).copy_from(phi_ref);
    let svd = x.clone().svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::Singular(
            "reference embedding is rank-deficient; add a small ridge or drop collinear dimensions".into(),
        ));
    }
    let sol = svd.solve(phi_var, 0.0).map_err(|e| Error::Singular(e.to_string()))?;
    let a = sol.rows(0, d).into_owned();
    let a_sv = a.singular_values();
    if !(a_sv.min() > 1e-12 * a_sv.max().max(f64::MIN_POSITIVE)) {
        return Err(Error::Singular("fitted affine map is singular".into()));
    }
    let fitted = &x * &sol;
    let mut r2 = 0.0;
    for c in 0..d {
        let col = phi_var.column(c);
        let m = col.mean();
        let sst: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
        let sse: f64 = col.iter().zip(fitted.column(c).iter()).map(|(y, f)| (y - f) * (y - f)).sum();
        r2 += if sst > 0.0 { 1.0 - sse / sst } else if sse == 0.0 { 1.0 } else { 0.0 };
    }
    r2 /= d as f64;
    let mut cos: Vec<f64> = (0..n)
        .map(|i| {
            let f: Vec<f64> = fitted.row(i).iter().copied().collect();
            let v: Vec<f64> = phi_var.row(i).iter().copied().collect();
            stats::cosine(&f, &v).unwrap_or(0.0)
        })
        .collect();
    let cosine_mean = stats::mean(&cos);
    cos.sort_by(f64::total_cmp);
    let mut transform = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            transform[r * d + c] = a[(r, c)];
        }
    }
    Ok(AffineAlignment {
        transform,
        offset: sol.row(d).iter().copied().collect(),
        r2,
        cosine_mean,
        cosine_q025: stats::quantile_sorted(&cos, 0.025),
        cosine_q975: stats::quantile_sorted(&cos, 0.975),
    })
}

/// One-dimensional ideal-point world: users and MPs on a line, MPs grouped
/// by party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BipartiteSpec {
    pub n_users: usize,
    pub n_mps: usize,
    /// Mean latent position of each party's MPs; MPs are split evenly.
    pub party_positions: Vec<f64>,
    pub party_spread: f64,
    pub user_sd: f64,
    pub activity_mean: f64,
    pub activity_sd: f64,
    pub popularity_sd: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for BipartiteSpec {
    fn default() -> Self {
        BipartiteSpec {
            n_users: 500,
            n_mps: 40,
            party_positions: vec![-1.0, 1.0],
            party_spread: 0.3,
            user_sd: 1.0,
            activity_mean: -0.5,
            activity_sd: 0.5,
            popularity_sd: 0.5,
            gamma: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteWorld {
    pub graph: BipartiteGraph,
    pub truth: HomophilyModel,
    /// Party label (`p0`, `p1`, ...) of each MP.
    pub party_of: Vec<String>,
}

pub fn generate_bipartite_world(spec: &BipartiteSpec) -> Result<BipartiteWorld> {
    let k = spec.party_positions.len();
    if k == 0 || spec.n_mps < k || spec.n_users == 0 {
        return Err(invalid("bipartite world needs users and at least one MP per party"));
    }
    let normal = |m: f64, s: f64| Normal::new(m, s).map_err(|e| invalid(e.to_string()));
    let mut r = rng::seeded(spec.seed, stream::SCALING);
    let users = normal(0.0, spec.user_sd)?;
    let spread = normal(0.0, spec.party_spread)?;
    let act = normal(spec.activity_mean, spec.activity_sd)?;
    let pop = normal(0.0, spec.popularity_sd)?;
    let party_idx: Vec<usize> = (0..spec.n_mps).map(|j| j * k / spec.n_mps).collect();
    let truth = HomophilyModel {
        d_pol: 1,
        positions_users: (0..spec.n_users).map(|_| users.sample(&mut r)).collect(),
        positions_mps: party_idx.iter().map(|&p| spec.party_positions[p] + spread.sample(&mut r)).collect(),
        activity: (0..spec.n_users).map(|_| act.sample(&mut r)).collect(),
        popularity: (0..spec.n_mps).map(|_| pop.sample(&mut r)).collect(),
        gamma: spec.gamma,
        log_likelihood: 0.0,
        iterations: 0,
        converged: true,
    };
    let user_names = (0..spec.n_users).map(|i| format!("user{i}")).collect();
    let mp_names = (0..spec.n_mps).map(|j| format!("mp{j}")).collect();
    let graph = truth.sample_follows(user_names, mp_names, &mut r)?;
    let mut truth = truth;
    truth.log_likelihood = truth.log_likelihood_of(&graph);
    Ok(BipartiteWorld {
        graph,
        truth,
        party_of: party_idx.iter().map(|p| format!("p{p}")).collect(),
    })
}
