//! Iterative removal of linearly encoded attributes.
//!
//! Each round finds the direction most correlated with the attribute, tests
//! it against the permutation null, and if it is significant projects every
//! row onto that direction's orthogonal complement. Rounds continue until
//! no significant direction is left.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::RelationKind;
use crate::probe::{cca_direction, permutation_pvalue, AttributeTable, CcaOptions};
use crate::rng;
use crate::transe::EmbeddingModel;

const ORTHONORMAL_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EraseOptions {
    pub significance: f64,
    pub n_perm: usize,
    /// Capped at the embedding dimension.
    pub max_iter: usize,
    pub seed: u64,
    pub cca: CcaOptions,
    /// Also project the relation vectors so scores stay in the protected
    /// subspace.
    pub project_relations: bool,
}

impl Default for EraseOptions {
    fn default() -> Self {
        EraseOptions {
            significance: 0.01,
            n_perm: 1000,
            max_iter: 10,
            seed: 0,
            cca: CcaOptions::default(),
            project_relations: true,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The last direction tested was not significant.
    Significance,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStat {
    pub rho: f64,
    pub p_value: f64,
    /// 99th percentile of the permutation null; the correlation cutoff
    /// implied by the data.
    pub null_q99: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErasureResult {
    pub attribute: String,
    pub removed_directions: Vec<Vec<f64>>,
    pub per_iteration: Vec<IterationStat>,
    pub protected_phi: DMatrix<f64>,
    pub stop_reason: StopReason,
}

/// Serializable record of an erasure run, without the matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErasureSummary {
    pub attribute: String,
    pub significance: f64,
    pub removed: usize,
    pub per_iteration: Vec<IterationStat>,
    pub stop_reason: StopReason,
    pub direction_files: Vec<String>,
}

impl ErasureResult {
    pub fn summary(&self, significance: f64, direction_files: Vec<String>) -> ErasureSummary {
        ErasureSummary {
            attribute: self.attribute.clone(),
            significance,
            removed: self.removed_directions.len(),
            per_iteration: self.per_iteration.clone(),
            stop_reason: self.stop_reason,
            direction_files,
        }
    }
}

pub fn erase_attribute(phi: &DMatrix<f64>, attr: &str, table: &AttributeTable, options: &EraseOptions) -> Result<ErasureResult> {
    if !(options.significance > 0.0 && options.significance < 1.0) {
        return Err(invalid("significance must lie in (0, 1)"));
    }
    // At most `d` orthogonal directions exist.
    let max_iter = options.max_iter.min(phi.ncols());
    let mut removed: Vec<Vec<f64>> = Vec::new();
    let mut per_iteration = Vec::new();
    let mut current = phi.clone();
    let mut stop_reason = StopReason::MaxIter;
    for iter in 0..max_iter {
        let observed = cca_direction(&current, attr, table, &options.cca)?;
        let tested = permutation_pvalue(
            &current,
            attr,
            table,
            &observed,
            options.n_perm,
            rng::derive(options.seed, iter as u64),
            &options.cca,
        )?;
        let p = tested.p_value.expect("permutation test sets p");
        per_iteration.push(IterationStat {
            rho: tested.correlation,
            p_value: p,
            null_q99: tested.null_quantiles.expect("permutation test sets quantiles").q99,
        });
        if p > options.significance {
            stop_reason = StopReason::Significance;
            break;
        }
        let Some(w) = orthonormalize(&tested.direction, &removed) else {
            // The new direction lies in the span already removed; nothing
            // left to project.
            stop_reason = StopReason::Significance;
            break;
        };
        removed.push(w);
        current = project_out(phi, &removed);
    }
    Ok(ErasureResult {
        attribute: attr.to_string(),
        removed_directions: removed,
        per_iteration,
        protected_phi: current,
        stop_reason,
    })
}

/// Gram-Schmidt step (applied twice for stability); `None` when `w` is
/// numerically inside the span of `basis`.
fn orthonormalize(w: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut v = DVector::from_column_slice(w);
    for _ in 0..2 {
        for u in basis {
            let u = DVector::from_column_slice(u);
            let c = u.dot(&v);
            v.axpy(-c, &u, 1.0);
        }
    }
    let n = v.norm();
    (n > 1e-8).then(|| v.iter().map(|x| x / n).collect())
}

fn project_out(phi: &DMatrix<f64>, directions: &[Vec<f64>]) -> DMatrix<f64> {
    if directions.is_empty() {
        return phi.clone();
    }
    let w = DMatrix::from_fn(phi.ncols(), directions.len(), |i, k| directions[k][i]);
    phi - (phi * &w) * w.transpose()
}

fn check_orthonormal(dim: usize, directions: &[Vec<f64>]) -> Result<()> {
    for (i, a) in directions.iter().enumerate() {
        if a.len() != dim {
            return Err(invalid("direction has the wrong dimension"));
        }
        for (j, b) in directions.iter().enumerate().skip(i) {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            if (dot - expected).abs() > ORTHONORMAL_TOLERANCE {
                return Err(invalid(format!("directions {i} and {j} are not orthonormal (dot = {dot})")));
            }
        }
    }
    Ok(())
}

/// `Phi (I - sum w w')` for an orthonormal set of directions.
pub fn apply_protection(phi: &DMatrix<f64>, directions: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    check_orthonormal(phi.ncols(), directions)?;
    Ok(project_out(phi, directions))
}

/// Applies the protection to a whole model: entity rows always, relation
/// vectors when `project_relations` is set.
pub fn protect_model(model: &EmbeddingModel, directions: &[Vec<f64>], project_relations: bool) -> Result<EmbeddingModel> {
    let phi = apply_protection(&model.entity_matrix(), directions)?;
    let mut out = model.with_entity_matrix(&phi)?;
    if project_relations {
        let relations: BTreeMap<RelationKind, Vec<f64>> = model
            .relations()
            .iter()
            .map(|(&r, v)| {
                let row = DMatrix::from_row_slice(1, v.len(), v);
                (r, project_out(&row, directions).as_slice().to_vec())
            })
            .collect();
        out = out.with_relations(relations)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::seeded(seed, 0);
        DMatrix::from_fn(n, d, |_, _| r.sample(StandardNormal))
    }

    fn table(values: Vec<f64>) -> AttributeTable {
        let mut t = AttributeTable::new(values.len());
        t.insert_full("a", values).unwrap();
        t
    }

    fn opts(seed: u64) -> EraseOptions {
        EraseOptions {
            n_perm: 300,
            max_iter: 6,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn protection_examples() {
        let phi = gaussian(20, 4, 1);
        let w = vec![vec![0.6, 0.8, 0.0, 0.0]];
        let once = apply_protection(&phi, &w).unwrap();
        let twice = apply_protection(&once, &w).unwrap();
        assert!((&once - &twice).amax() < 1e-14);

        let basis: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| f64::from(i == j)).collect()).collect();
        assert!(apply_protection(&phi, &basis).unwrap().amax() < 1e-15);

        let e0 = apply_protection(&phi, &basis[..1]).unwrap();
        assert!(e0.column(0).iter().all(|&x| x == 0.0));
        for j in 1..4 {
            assert_eq!(e0.column(j), phi.column(j));
        }

        assert!(apply_protection(&phi, &[vec![1.0, 1.0, 0.0, 0.0]]).is_err());
        assert!(apply_protection(&phi, &[basis[0].clone(), vec![0.6, 0.8, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn row_norms_never_grow() {
        let phi = gaussian(50, 6, 2);
        let s = 0.5f64.sqrt();
        let p = apply_protection(&phi, &[vec![s, 0.0, s, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]]).unwrap();
        for i in 0..50 {
            assert!(p.row(i).norm() <= phi.row(i).norm() + 1e-12);
        }
    }

    #[test]
    fn single_planted_direction_is_removed_once() {
        let phi = gaussian(1500, 12, 3);
        let mut r = rng::seeded(4, 0);
        let a: Vec<f64> = (0..1500).map(|i| phi[(i, 5)] + 0.1 * r.sample::<f64, _>(StandardNormal)).collect();
        let res = erase_attribute(&phi, "a", &table(a), &opts(1)).unwrap();
        assert_eq!(res.removed_directions.len(), 1);
        assert_eq!(res.stop_reason, StopReason::Significance);
        let last = res.per_iteration.last().unwrap();
        assert!(last.p_value > 0.01 && last.rho < last.null_q99);
        assert!((res.removed_directions[0][5].abs() - 1.0).abs() < 1e-3);
        for w in &res.removed_directions {
            let v = &res.protected_phi * DVector::from_column_slice(w);
            assert!(v.amax() < 1e-10);
        }
    }

    #[test]
    fn noise_attribute_removes_nothing() {
        let phi = gaussian(800, 8, 5);
        let mut r = rng::seeded(6, 0);
        let a: Vec<f64> = (0..800).map(|_| r.sample(StandardNormal)).collect();
        let res = erase_attribute(&phi, "a", &table(a), &opts(2)).unwrap();
        assert!(res.removed_directions.is_empty());
        assert_eq!(res.stop_reason, StopReason::Significance);
        assert_eq!(res.protected_phi, phi);
    }

    #[test]
    fn max_iter_zero_is_identity() {
        let phi = gaussian(30, 3, 7);
        let a: Vec<f64> = (0..30).map(|i| phi[(i, 0)]).collect();
        let res = erase_attribute(&phi, "a", &table(a), &EraseOptions { max_iter: 0, ..opts(0) }).unwrap();
        assert_eq!(res.protected_phi, phi);
        assert!(res.per_iteration.is_empty());
        assert_eq!(res.stop_reason, StopReason::MaxIter);
        // constant attribute: nothing to probe
        assert!(erase_attribute(&phi, "a", &table(vec![0.0; 30]), &EraseOptions { max_iter: 4, ..opts(0) }).is_err());
    }

    #[test]
    fn max_iter_is_capped_at_dimension() {
        let phi = gaussian(200, 2, 3);
        let a: Vec<f64> = (0..200).map(|i| phi[(i, 0)] + 0.5 * phi[(i, 1)]).collect();
        let res = erase_attribute(&phi, "a", &table(a), &EraseOptions { max_iter: 10, ..opts(0) }).unwrap();
        assert!(res.per_iteration.len() <= 2);
    }

    #[test]
    fn anisotropic_two_axis_encoding_needs_two_rounds() {
        // Unequal variances along the two planted axes leave a residual
        // correlation after the first projection. The planted axes are kept
        // small next to the others so estimation error in the second round
        // does not leave a detectable remainder.
        let mut phi = gaussian(2000, 10, 8);
        phi.column_mut(0).scale_mut(0.5);
        phi.column_mut(1).scale_mut(0.2);
        let mut r = rng::seeded(9, 0);
        let a: Vec<f64> = (0..2000)
            .map(|i| phi[(i, 0)] / 0.5 + phi[(i, 1)] / 0.2 + 0.2 * r.sample::<f64, _>(StandardNormal))
            .collect();
        let res = erase_attribute(&phi, "a", &table(a), &opts(3)).unwrap();
        assert_eq!(res.removed_directions.len(), 2);
        let (u, v) = (&res.removed_directions[0], &res.removed_directions[1]);
        assert!(u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>().abs() < 1e-10);
        // Together they span the two planted axes.
        for w in [u, v] {
            assert!(w[0] * w[0] + w[1] * w[1] > 1.0 - 1e-3);
        }
    }

    #[test]
    fn effective_rank_drops_by_removed_count() {
        let phi = gaussian(200, 8, 10);
        let s = 0.5f64.sqrt();
        let dirs = vec![vec![s, s, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]];
        let p = apply_protection(&phi, &dirs).unwrap();
        let rank = |m: &DMatrix<f64>| {
            let sv = m.singular_values();
            let max = sv.max();
            sv.iter().filter(|&&x| x > 1e-8 * max).count()
        };
        assert_eq!(rank(&p), rank(&phi) - 2);
    }

    #[test]
    fn model_protection_projects_relations_on_request() {
        let phi = gaussian(5, 3, 11);
        let rel = BTreeMap::from([(RelationKind::Wtf, vec![1.0, 2.0, 3.0])]);
        let m = EmbeddingModel::from_matrix(&phi, rel).unwrap();
        let e0 = vec![vec![1.0, 0.0, 0.0]];
        let p = protect_model(&m, &e0, true).unwrap();
        assert_eq!(p.relation(RelationKind::Wtf).unwrap(), &[0.0, 2.0, 3.0]);
        let q = protect_model(&m, &e0, false).unwrap();
        assert_eq!(q.relation(RelationKind::Wtf).unwrap(), &[1.0, 2.0, 3.0]);
        assert!(p.entity_matrix().column(0).iter().all(|&x| x == 0.0));
    }
}
