//! Linear probes for user attributes.
//!
//! For an attribute `a`, the probe finds the unit direction `w` whose
//! projection `Phi w` is maximally correlated with `a` (a one-sided CCA,
//! which reduces to a ridge regression of `a` on the centred embedding),
//! and tests it against a permutation null.

mod alignment;
mod attributes;
mod cca;

use serde::{Deserialize, Serialize};

pub use alignment::{
    alignment_matrix, decile_overrepresentation, ordering_test, projection_spearman, AlignmentMatrix, Decile,
    Ordering, OrderingTest, TokenLift,
};
pub use attributes::{AttributeColumn, AttributeTable};
pub use cca::{cca_direction, permutation_pvalue, probe_attribute, CcaOptions, CcaProblem};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullQuantiles {
    pub q50: f64,
    pub q95: f64,
    pub q99: f64,
    pub q999: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub attribute: String,
    /// Unit-norm direction in embedding space.
    pub direction: Vec<f64>,
    /// Pearson correlation of `Phi w` with the attribute on covered rows.
    pub correlation: f64,
    /// One-sided permutation p-value, once tested.
    pub p_value: Option<f64>,
    /// Quantiles of the permutation null of `|rho|`, once tested.
    pub null_quantiles: Option<NullQuantiles>,
    pub n_used: usize,
    pub ridge: f64,
}

/// Probe summary as written to reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub attribute: String,
    pub rho: f64,
    pub p_value: Option<f64>,
    pub n_used: usize,
    pub null_quantiles: Option<NullQuantiles>,
    pub direction_file: Option<String>,
}

impl ProbeResult {
    pub fn report(&self, direction_file: Option<String>) -> ProbeReport {
        ProbeReport {
            attribute: self.attribute.clone(),
            rho: self.correlation,
            p_value: self.p_value,
            n_used: self.n_used,
            null_quantiles: self.null_quantiles,
            direction_file,
        }
    }
}
