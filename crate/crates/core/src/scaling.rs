//! Ideal-point scaling from user→MP follows.
//!
//! The homophily model gives
//! `P(user i follows MP j) = logistic(alpha_i + beta_j - gamma * |phi_i - phi_j|^2)`.
//! [`fit_homophily`] finds a MAP estimate under independent Gaussian priors,
//! with `gamma = exp(g)` so it stays positive. Latent positions are only
//! identified up to isometry, so [`calibrate_affine`] maps them onto a
//! reference scale through party centroids.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats;

/// Binary user × MP follow matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    users: Vec<String>,
    mps: Vec<String>,
    follows: Vec<bool>,
}

impl BipartiteGraph {
    pub fn new(users: Vec<String>, mps: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut follows = vec![false; users.len() * mps.len()];
        for &(u, m) in edges {
            if u >= users.len() || m >= mps.len() {
                return Err(invalid(format!("edge ({u}, {m}) is out of range")));
            }
            follows[u * mps.len() + m] = true;
        }
        Ok(BipartiteGraph { users, mps, follows })
    }

    /// Reads `user_id,mp_id` rows; duplicates collapse.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut users = Vec::new();
        let mut mps = Vec::new();
        let mut uix: HashMap<String, usize> = HashMap::new();
        let mut mix: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let (Some(u), Some(m)) = (rec.get(0), rec.get(1)) else {
                return Err(Error::Parse {
                    line: row + 2,
                    message: "expected `user_id,mp_id`".into(),
                });
            };
            let ui = *uix.entry(u.to_string()).or_insert_with(|| {
                users.push(u.to_string());
                users.len() - 1
            });
            let mi = *mix.entry(m.to_string()).or_insert_with(|| {
                mps.push(m.to_string());
                mps.len() - 1
            });
            edges.push((ui, mi));
        }
        BipartiteGraph::new(users, mps, &edges)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["user_id", "mp_id"])?;
        for u in 0..self.n_users() {
            for m in 0..self.n_mps() {
                if self.follows(u, m) {
                    w.write_record([&self.users[u], &self.mps[m]])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_mps(&self) -> usize {
        self.mps.len()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn mps(&self) -> &[String] {
        &self.mps
    }

    pub fn follows(&self, user: usize, mp: usize) -> bool {
        self.follows[user * self.mps.len() + mp]
    }

    pub fn user_degree(&self, user: usize) -> usize {
        (0..self.n_mps()).filter(|&m| self.follows(user, m)).count()
    }

    pub fn mp_degree(&self, mp: usize) -> usize {
        (0..self.n_users()).filter(|&u| self.follows(u, mp)).count()
    }

    /// Repeatedly drops users following fewer than `min_follows` MPs and
    /// MPs without followers until both conditions hold. Returns the kept
    /// original user and MP indices alongside the filtered graph.
    pub fn filtered(&self, min_follows: usize) -> (Self, Vec<usize>, Vec<usize>) {
        let mut keep_u: Vec<usize> = (0..self.n_users()).collect();
        let mut keep_m: Vec<usize> = (0..self.n_mps()).collect();
        loop {
            let ku: Vec<usize> = keep_u
                .iter()
                .copied()
                .filter(|&u| keep_m.iter().filter(|&&m| self.follows(u, m)).count() >= min_follows.max(1))
                .collect();
            let km: Vec<usize> = keep_m
                .iter()
                .copied()
                .filter(|&m| ku.iter().any(|&u| self.follows(u, m)))
                .collect();
            let stable = ku.len() == keep_u.len() && km.len() == keep_m.len();
            keep_u = ku;
            keep_m = km;
            if stable {
                break;
            }
        }
        let mut follows = Vec::with_capacity(keep_u.len() * keep_m.len());
        for &u in &keep_u {
            follows.extend(keep_m.iter().map(|&m| self.follows(u, m)));
        }
        let g = BipartiteGraph {
            users: keep_u.iter().map(|&u| self.users[u].clone()).collect(),
            mps: keep_m.iter().map(|&m| self.mps[m].clone()).collect(),
            follows,
        };
        (g, keep_u, keep_m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomophilyConfig {
    /// Latent dimensionality, 1 or 2.
    pub d_pol: usize,
    /// Prior standard deviation shared by alpha, beta, phi and log gamma.
    pub prior_sd: f64,
    /// Users must follow at least this many MPs.
    pub min_follows: usize,
    pub max_iter: usize,
    /// Stop once the gradient's infinity norm falls below this.
    pub grad_tol: f64,
    /// Hold gamma at this value instead of fitting it.
    pub fix_gamma: Option<f64>,
}

impl Default for HomophilyConfig {
    fn default() -> Self {
        HomophilyConfig {
            d_pol: 1,
            prior_sd: 1.0,
            min_follows: 3,
            max_iter: 5_000,
            grad_tol: 1e-6,
            fix_gamma: None,
        }
    }
}

impl HomophilyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.d_pol) {
            return Err(invalid("d_pol must be 1 or 2"));
        }
        if !(self.prior_sd > 0.0) {
            return Err(invalid("prior_sd must be positive"));
        }
        if self.min_follows == 0 {
            return Err(invalid("min_follows must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(invalid("grad_tol must be positive"));
        }
        if let Some(g) = self.fix_gamma {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(invalid("fixed gamma must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomophilyModel {
    pub d_pol: usize,
    pub activity: Vec<f64>,
    pub popularity: Vec<f64>,
    pub gamma: f64,
    /// Row-major `n_users × d_pol`.
    pub positions_users: Vec<f64>,
    /// Row-major `n_mps × d_pol`.
    pub positions_mps: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl HomophilyModel {
    pub fn user_position(&self, i: usize) -> &[f64] {
        &self.positions_users[i * self.d_pol..(i + 1) * self.d_pol]
    }

    pub fn mp_position(&self, j: usize) -> &[f64] {
        &self.positions_mps[j * self.d_pol..(j + 1) * self.d_pol]
    }

    pub fn linear_predictor(&self, i: usize, j: usize) -> f64 {
        let d2: f64 = self
            .user_position(i)
            .iter()
            .zip(self.mp_position(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.activity[i] + self.popularity[j] - self.gamma * d2
    }

    pub fn probability(&self, i: usize, j: usize) -> f64 {
        stats::sigmoid(self.linear_predictor(i, j))
    }

    pub fn log_likelihood_of(&self, graph: &BipartiteGraph) -> f64 {
        let mut ll = 0.0;
        for i in 0..graph.n_users() {
            for j in 0..graph.n_mps() {
                let eta = self.linear_predictor(i, j);
                ll += if graph.follows(i, j) {
                    stats::log_sigmoid(eta)
                } else {
                    stats::log_sigmoid(-eta)
                };
            }
        }
        ll
    }

    /// Applies `x -> R x + t` to every user and MP position.
    pub fn transformed(&self, rotation: &DMatrix<f64>, translation: &[f64]) -> Result<Self> {
        let d = self.d_pol;
        if rotation.shape() != (d, d) || translation.len() != d {
            return Err(invalid("isometry has the wrong dimension"));
        }
        let map = |flat: &[f64]| -> Vec<f64> {
            flat.chunks(d)
                .flat_map(|x| {
                    let y = rotation * DVector::from_column_slice(x);
                    y.iter().zip(translation).map(|(a, b)| a + b).collect::<Vec<_>>()
                })
                .collect()
        };
        Ok(HomophilyModel {
            positions_users: map(&self.positions_users),
            positions_mps: map(&self.positions_mps),
            ..self.clone()
        })
    }

    /// Draws a follow matrix from the model.
    pub fn sample_follows(&self, users: Vec<String>, mps: Vec<String>, rng: &mut impl rand::Rng) -> Result<BipartiteGraph> {
        if users.len() != self.activity.len() || mps.len() != self.popularity.len() {
            return Err(invalid("name lists do not match the model"));
        }
        let mut edges = Vec::new();
        for i in 0..users.len() {
            for j in 0..mps.len() {
                if rng.random::<f64>() < self.probability(i, j) {
                    edges.push((i, j));
                }
            }
        }
        BipartiteGraph::new(users, mps, &edges)
    }
}

/// Parameter vector layout: `[alpha (nu), beta (nm), g, phi_u (nu*d), phi_m (nm*d)]`.
struct Layout {
    nu: usize,
    nm: usize,
    d: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.nu + self.nm + 1 + (self.nu + self.nm) * self.d
    }
    fn g(&self) -> usize {
        self.nu + self.nm
    }
    fn pu(&self, i: usize) -> usize {
        self.g() + 1 + i * self.d
    }
    fn pm(&self, j: usize) -> usize {
        self.g() + 1 + (self.nu + j) * self.d
    }
}

struct Objective<'a> {
    graph: &'a BipartiteGraph,
    lay: Layout,
    inv_var: f64,
    fix_g: Option<f64>,
}

impl Objective<'_> {
    fn gamma(&self, x: &[f64]) -> f64 {
        match self.fix_g {
            Some(g) => g,
            None => x[self.lay.g()].exp(),
        }
    }

    fn eta(&self, x: &[f64], i: usize, j: usize) -> (f64, f64) {
        let l = &self.lay;
        let d2: f64 = (0..l.d)
            .map(|k| {
                let diff = x[l.pu(i) + k] - x[l.pm(j) + k];
                diff * diff
            })
            .sum();
        (x[i] + x[l.nu + j] - self.gamma(x) * d2, d2)
    }

    fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.lay.nu {
            for j in 0..self.lay.nm {
                let (eta, _) = self.eta(x, i, j);
                ll += if self.graph.follows(i, j) {
                    stats::log_sigmoid(eta)
                } else {
                    stats::log_sigmoid(-eta)
                };
            }
        }
        ll
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        let skip_g = self.fix_g.is_some();
        -0.5 * self.inv_var
            * x.iter()
                .enumerate()
                .filter(|&(k, _)| !(skip_g && k == self.lay.g()))
                .map(|(_, v)| v * v)
                .sum::<f64>()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.log_likelihood(x) + self.log_prior(x)
    }

    /// Gradient of the log posterior.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let l = &self.lay;
        let gamma = self.gamma(x);
        let mut grad: Vec<f64> = x.iter().map(|v| -self.inv_var * v).collect();
        if self.fix_g.is_some() {
            grad[l.g()] = 0.0;
        }
        for i in 0..l.nu {
            for j in 0..l.nm {
                let (eta, d2) = self.eta(x, i, j);
                let y = if self.graph.follows(i, j) { 1.0 } else { 0.0 };
                let r = y - stats::sigmoid(eta);
                grad[i] += r;
                grad[l.nu + j] += r;
                if self.fix_g.is_none() {
                    grad[l.g()] -= r * gamma * d2;
                }
                for k in 0..l.d {
                    let diff = x[l.pu(i) + k] - x[l.pm(j) + k];
                    let c = 2.0 * r * gamma * diff;
                    grad[l.pu(i) + k] -= c;
                    grad[l.pm(j) + k] += c;
                }
            }
        }
        grad
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-3, 1.0 - 1e-3);
    (p / (1.0 - p)).ln()
}

/// Starting point: degree-based intercepts and positions from the leading
/// singular vectors of the double-centred follow matrix.
fn initial_point(graph: &BipartiteGraph, lay: &Layout) -> Vec<f64> {
    let (nu, nm, d) = (lay.nu, lay.nm, lay.d);
    let mut x = vec![0.0; lay.len()];
    let total: usize = (0..nu).map(|i| graph.user_degree(i)).sum();
    let overall = total as f64 / (nu * nm) as f64;
    for i in 0..nu {
        x[i] = 0.5 * logit(graph.user_degree(i) as f64 / nm as f64);
    }
    for j in 0..nm {
        x[nu + j] = logit(graph.mp_degree(j) as f64 / nu as f64) - 0.5 * logit(overall);
    }
    let y = DMatrix::from_fn(nu, nm, |i, j| if graph.follows(i, j) { 1.0 } else { 0.0 });
    let row_mean = y.column_mean();
    let col_mean = y.row_mean();
    let grand = y.mean();
    let c = DMatrix::from_fn(nu, nm, |i, j| y[(i, j)] - row_mean[i] - col_mean[j] + grand);
    let svd = c.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    // singular values come sorted in descending order
    for k in 0..d.min(u.ncols()) {
        let uc = u.column(k);
        let su = (uc.iter().map(|v| v * v).sum::<f64>() / nu as f64).sqrt().max(1e-12);
        let vr = vt.row(k);
        let sv = (vr.iter().map(|v| v * v).sum::<f64>() / nm as f64).sqrt().max(1e-12);
        for i in 0..nu {
            x[lay.pu(i) + k] = uc[i] / su;
        }
        for j in 0..nm {
            x[lay.pm(j) + k] = vr[j] / sv;
        }
    }
    x
}

/// MAP fit of the homophily model by L-BFGS ascent with Armijo
/// backtracking. Deterministic: the starting point depends only on the data.
pub fn fit_homophily(graph: &BipartiteGraph, config: &HomophilyConfig) -> Result<HomophilyModel> {
    config.validate()?;
    if graph.n_users() == 0 || graph.n_mps() == 0 {
        return Err(invalid("follow matrix is empty"));
    }
    for i in 0..graph.n_users() {
        if graph.user_degree(i) < config.min_follows {
            return Err(invalid(format!(
                "user `{}` follows fewer than {} MPs; filter the graph first",
                graph.users[i], config.min_follows
            )));
        }
    }
    if let Some(j) = (0..graph.n_mps()).find(|&j| graph.mp_degree(j) == 0) {
        return Err(invalid(format!("MP `{}` has no followers", graph.mps[j])));
    }
    let lay = Layout {
        nu: graph.n_users(),
        nm: graph.n_mps(),
        d: config.d_pol,
    };
    let obj = Objective {
        graph,
        inv_var: 1.0 / (config.prior_sd * config.prior_sd),
        fix_g: config.fix_gamma,
        lay,
    };
    let x0 = initial_point(graph, &obj.lay);
    let (x, iterations, converged) = lbfgs_ascent(|x| obj.value(x), |x| obj.gradient(x), x0, config)?;
    let l = &obj.lay;
    Ok(HomophilyModel {
        d_pol: l.d,
        activity: x[..l.nu].to_vec(),
        popularity: x[l.nu..l.nu + l.nm].to_vec(),
        gamma: obj.gamma(&x),
        positions_users: x[l.pu(0)..l.pm(0)].to_vec(),
        positions_mps: x[l.pm(0)..].to_vec(),
        log_likelihood: obj.log_likelihood(&x),
        iterations,
        converged,
    })
}

const LBFGS_MEMORY: usize = 10;

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f`; returns the final point, iteration count and whether the
/// gradient tolerance was met.
fn lbfgs_ascent(
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    mut x: Vec<f64>,
    config: &HomophilyConfig,
) -> Result<(Vec<f64>, usize, bool)> {
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    for it in 0..config.max_iter {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !gmax.is_finite() || !fx.is_finite() {
            return Err(Error::Diverged { epoch: it + 1 });
        }
        if gmax < config.grad_tol {
            return Ok((x, it, true));
        }
        // two-loop recursion on the negated objective, so `dir` is an ascent direction
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dotv(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let scale = dotv(s, y) / dotv(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        } else {
            let scale = 1e-2 / gmax.max(1.0);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dotv(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir = q;
        let mut slope = dotv(&g, &dir);
        if !(slope > 0.0) {
            hist.clear();
            dir = g.iter().map(|v| v * 1e-2 / gmax.max(1.0)).collect();
            slope = dotv(&g, &dir);
        }
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc >= fx + 1e-4 * step * slope {
                next = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnext)) = next.filter(|(_, fc)| *fc > fx) else {
            // no further ascent is representable; accept if nearly stationary
            return Ok((x, it, gmax < config.grad_tol.sqrt()));
        };
        let gn = grad(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // curvature pair of the minimization problem: y = -(gn - g)
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dotv(&s, &y);
        if sy > 1e-12 * dotv(&y, &y).sqrt() * dotv(&s, &s).sqrt() {
            if hist.len() == LBFGS_MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fnext;
        g = gn;
    }
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((x, config.max_iter, gmax < config.grad_tol))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub party: String,
    pub centroid: Vec<f64>,
    pub reference: Vec<f64>,
}

/// `y = A x + b`, fitted by least squares over party anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineCalibration {
    /// Row-major `d × d`.
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
    pub anchors: Vec<Anchor>,
    /// Root mean squared anchor residual.
    pub rmse: f64,
}

impl AffineCalibration {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|r| self.offset[r] + (0..d).map(|c| self.matrix[r * d + c] * x[c]).sum::<f64>())
            .collect()
    }

    /// Calibrated `(users, mps)` positions, row-major.
    pub fn apply_model(&self, model: &HomophilyModel) -> (Vec<f64>, Vec<f64>) {
        let map = |flat: &[f64]| flat.chunks(model.d_pol).flat_map(|x| self.apply(x)).collect();
        (map(&model.positions_users), map(&model.positions_mps))
    }
}

/// Fits the affine map taking party centroids of MP positions to the
/// reference positions. `party_of[j]` names the party of MP `j`; parties
/// without a reference, and MPs without a party, are ignored.
pub fn calibrate_affine(
    model: &HomophilyModel,
    party_of: &[Option<String>],
    reference: &BTreeMap<String, Vec<f64>>,
) -> Result<AffineCalibration> {
    let d = model.d_pol;
    if party_of.len() != model.popularity.len() {
        return Err(invalid("party assignment does not cover every MP"));
    }
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (j, p) in party_of.iter().enumerate() {
        let Some(p) = p.as_deref() else { continue };
        if !reference.contains_key(p) {
            continue;
        }
        let e = sums.entry(p).or_insert_with(|| (vec![0.0; d], 0));
        e.0.iter_mut().zip(model.mp_position(j)).for_each(|(a, b)| *a += b);
        e.1 += 1;
    }
    let anchors: Vec<Anchor> = sums
        .into_iter()
        .map(|(p, (s, n))| -> Result<Anchor> {
            let reference = reference[p].clone();
            if reference.len() != d {
                return Err(invalid(format!("reference position of `{p}` has {} coordinates, expected {d}", reference.len())));
            }
            Ok(Anchor {
                party: p.to_string(),
                centroid: s.iter().map(|v| v / n as f64).collect(),
                reference,
            })
        })
        .collect::<Result<_>>()?;
    if anchors.len() < d + 1 {
        return Err(invalid(format!("{} anchors found; at least {} are needed", anchors.len(), d + 1)));
    }
    let m = anchors.len();
    let x = DMatrix::from_fn(m, d + 1, |r, c| if c < d { anchors[r].centroid[c] } else { 1.0 });
    let y = DMatrix::from_fn(m, d, |r, c| anchors[r].reference[c]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::Degenerate("party centroids are collinear; the affine map is not identified".into()));
    }
    let sol = svd.solve(&y, 0.0).map_err(|e| Error::Singular(e.to_string()))?;
    // sol is (d+1) × d: rows 0..d hold A^T, the last row holds b
    let mut matrix = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            matrix[r * d + c] = sol[(c, r)];
        }
    }
    let a = DMatrix::from_row_slice(d, d, &matrix);
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if a.determinant().abs() <= 1e-12 * scale.powi(d as i32) || scale == 0.0 {
        return Err(Error::Degenerate("calibration transform is singular".into()));
    }
    let offset: Vec<f64> = (0..d).map(|c| sol[(d, c)]).collect();
    let resid = &x * &sol - &y;
    let rmse = (resid.iter().map(|v| v * v).sum::<f64>() / (m * d) as f64).sqrt();
    Ok(AffineCalibration {
        matrix,
        offset,
        anchors,
        rmse,
    })
}

/// Reads `mp_id,party` rows.
pub fn read_party_assignment<R: Read>(reader: R, mps: &[String]) -> Result<Vec<Option<String>>> {
    let index: HashMap<&str, usize> = mps.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut out = vec![None; mps.len()];
    let mut rdr = csv::Reader::from_reader(reader);
    for rec in rdr.records() {
        let rec = rec?;
        if let (Some(&j), Some(p)) = (rec.get(0).and_then(|m| index.get(m)), rec.get(1)) {
            out[j] = Some(p.to_string());
        }
    }
    Ok(out)
}

/// Reads `party,position[,position1]` rows.
pub fn read_reference<R: Read>(reader: R) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let party = rec.get(0).unwrap_or("").to_string();
        let pos = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: row + 2,
                    message: format!("`{c}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(party, pos);
    }
    Ok(out)
}

/// Writes `entity_id,dim0[,dim1]` for users then MPs.
pub fn write_positions<W: Write>(names: &[String], positions: &[f64], d: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["entity_id".to_string()];
    header.extend((0..d).map(|k| format!("dim{k}")));
    w.write_record(&header)?;
    for (name, x) in names.iter().zip(positions.chunks(d)) {
        let mut rec = vec![name.clone()];
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
