use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttributeTable, NullQuantiles, ProbeResult};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, stream};
use crate::stats::{mean, pearson, quantile_sorted};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcaOptions {
    /// Ridge added to the diagonal; `None` picks `1e-6 * trace(X'X) / d`.
    pub ridge: Option<f64>,
    /// Scale embedding columns to unit variance before solving.
    pub standardize: bool,
    /// When set, the direction is oriented to have a non-negative inner
    /// product with this vector instead of a non-negative correlation.
    pub orientation: Option<Vec<f64>>,
}

/// The covered, centred design matrix with its factorised normal
/// equations, reusable across permutations of the attribute.
pub struct CcaProblem {
    rows: Vec<usize>,
    /// Centred (and possibly standardised) covered rows.
    x: DMatrix<f64>,
    /// Per-column factor mapping solutions back to raw embedding units.
    scale: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    ridge: f64,
}

impl CcaProblem {
    pub fn new(phi: &DMatrix<f64>, rows: Vec<usize>, options: &CcaOptions) -> Result<Self> {
        let d = phi.ncols();
        let m = rows.len();
        if m < 3 {
            return Err(invalid(format!("probing needs at least 3 covered entities, got {m}")));
        }
        if rows.iter().any(|&i| i >= phi.nrows()) {
            return Err(invalid("attribute table is larger than the embedding"));
        }
        let mut x = phi.select_rows(&rows);
        let mut scale = vec![1.0; d];
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let mu = col.mean();
            col.add_scalar_mut(-mu);
            if options.standardize {
                let sd = (col.norm_squared() / m as f64).sqrt();
                if sd > 0.0 {
                    col /= sd;
                    scale[j] = 1.0 / sd;
                }
            }
        }
        let mut gram = x.tr_mul(&x);
        let ridge = match options.ridge {
            Some(r) if r.is_finite() && r >= 0.0 => r,
            Some(r) => return Err(invalid(format!("ridge must be non-negative, got {r}"))),
            None => 1e-6 * gram.trace() / d as f64,
        };
        if ridge == 0.0 && m < d + 2 {
            return Err(Error::Singular(format!(
                "{m} covered entities for a {d}-dimensional embedding; set a positive ridge"
            )));
        }
        for j in 0..d {
            gram[(j, j)] += ridge;
        }
        let singular = || Error::Singular("embedding Gram matrix is numerically singular; set a positive ridge".into());
        let chol = Cholesky::new(gram).ok_or_else(singular)?;
        let diag = chol.l_dirty().diagonal();
        if diag.min().powi(2) < 1e-12 * diag.max().powi(2) {
            return Err(singular());
        }
        Ok(CcaProblem {
            rows,
            x,
            scale,
            chol,
            ridge,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Unnormalised solution in raw units and the correlation it achieves
    /// with `a` (one value per covered row).
    fn solve_raw(&self, a: &[f64]) -> Result<(DVector<f64>, f64)> {
        let mu = mean(a);
        let ac = DVector::from_iterator(a.len(), a.iter().map(|v| v - mu));
        if ac.norm_squared() == 0.0 {
            return Err(Error::Degenerate("attribute has zero variance on covered entities".into()));
        }
        let z = self.chol.solve(&self.x.tr_mul(&ac));
        let proj = &self.x * &z;
        let rho = pearson(proj.as_slice(), ac.as_slice())
            .ok_or_else(|| Error::Degenerate("no direction correlates with the attribute".into()))?;
        let w = DVector::from_iterator(z.len(), z.iter().zip(&self.scale).map(|(z, s)| z * s));
        Ok((w, rho))
    }

    /// Maximal correlation `rho >= 0` reachable for attribute values `a`.
    pub fn correlation(&self, a: &[f64]) -> Result<f64> {
        Ok(self.solve_raw(a)?.1.abs())
    }

    /// Unit direction oriented per `orientation` (or towards positive
    /// correlation), plus the correlation of the raw projection.
    pub fn direction(&self, phi: &DMatrix<f64>, a: &[f64], orientation: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
        let (w, _) = self.solve_raw(a)?;
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Degenerate("no direction correlates with the attribute".into()));
        }
        let mut w: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let proj: Vec<f64> = self.rows.iter().map(|&i| phi.row(i).iter().zip(&w).map(|(p, w)| p * w).sum()).collect();
        let mut rho = pearson(&proj, a).ok_or_else(|| Error::Degenerate("constant projection".into()))?;
        let flip = match orientation {
            Some(reference) => {
                if reference.len() != w.len() {
                    return Err(invalid("orientation vector has the wrong dimension"));
                }
                w.iter().zip(reference).map(|(a, b)| a * b).sum::<f64>() < 0.0
            }
            None => rho < 0.0,
        };
        if flip {
            w.iter_mut().for_each(|x| *x = -*x);
            rho = -rho;
        }
        Ok((w, rho))
    }
}

/// Direction of maximal correlation with attribute `attr` over its covered
/// entities.
pub fn cca_direction(phi: &DMatrix<f64>, attr: &str, table: &AttributeTable, options: &CcaOptions) -> Result<ProbeResult> {
    if table.entity_count() != phi.nrows() {
        return Err(invalid(format!(
            "attribute table covers {} entities, embedding has {}",
            table.entity_count(),
            phi.nrows()
        )));
    }
    let (rows, values) = table.get(attr)?.covered();
    let problem = CcaProblem::new(phi, rows, options)?;
    let (direction, correlation) = problem.direction(phi, &values, options.orientation.as_deref())?;
    Ok(ProbeResult {
        attribute: attr.to_string(),
        direction,
        correlation,
        p_value: None,
        null_quantiles: None,
        n_used: values.len(),
        ridge: problem.ridge(),
    })
}

/// Shuffles the covered values `n_perm` times, recomputes the maximal
/// correlation each time, and returns the add-one p-value of
/// `|rho_perm| >= |rho_obs|` together with null quantiles.
pub fn permutation_pvalue(
    phi: &DMatrix<f64>,
    attr: &str,
    table: &AttributeTable,
    observed: &ProbeResult,
    n_perm: usize,
    seed: u64,
    options: &CcaOptions,
) -> Result<ProbeResult> {
    if n_perm == 0 {
        return Err(invalid("need at least one permutation"));
    }
    let (rows, values) = table.get(attr)?.covered();
    let problem = CcaProblem::new(phi, rows, options)?;
    let mut null: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::seeded(rng::derive(seed, i as u64), stream::PERMUTATION);
            let mut a = values.clone();
            a.shuffle(&mut rng);
            problem.correlation(&a)
        })
        .collect::<Result<_>>()?;
    let obs = observed.correlation.abs();
    let exceed = null.iter().filter(|&&r| r >= obs).count();
    null.sort_by(f64::total_cmp);
    let q = |p| quantile_sorted(&null, p);
    Ok(ProbeResult {
        p_value: Some((1 + exceed) as f64 / (1 + n_perm) as f64),
        null_quantiles: Some(NullQuantiles {
            q50: q(0.5),
            q95: q(0.95),
            q99: q(0.99),
            q999: q(0.999),
        }),
        ..observed.clone()
    })
}

/// [`cca_direction`] followed by [`permutation_pvalue`].
pub fn probe_attribute(
    phi: &DMatrix<f64>,
    attr: &str,
    table: &AttributeTable,
    options: &CcaOptions,
    n_perm: usize,
    seed: u64,
) -> Result<ProbeResult> {
    let observed = cca_direction(phi, attr, table, options)?;
    permutation_pvalue(phi, attr, table, &observed, n_perm, seed, options)
}
