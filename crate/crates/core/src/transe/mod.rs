//! TransE embedding of the Follow/WTF network.
//!
//! Scores are `f(s, r, t) = (phi_s + phi_r) . phi_t`. Training minimises the
//! negated, alpha-weighted log-likelihood of positive and corrupted edges
//! with mini-batch Adagrad.

mod format;
mod loss;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use format::{load_embedding, read_embedding, save_embedding, write_embedding, write_embedding_csv};
pub use loss::{loss, loss_gradient, relation_weight, Gradient};
pub use model::{glorot_bound, init_embeddings, EmbeddingModel};
pub use train::{sweep_alpha, train, EpochStats, SweepRow, SweepTable, TrainOutcome};

pub(crate) use model::score_rows;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    /// Weight of the WTF term; Follow gets `1 - alpha`.
    pub alpha: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negative_ratio: usize,
    pub seed: u64,
    /// Single-threaded with a fixed visiting order; bit-reproducible.
    pub deterministic: bool,
    /// Draw fresh training negatives at the start of every epoch after the
    /// first instead of reusing the curated set.
    pub resample_negatives: bool,
    pub accumulator_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 256,
            alpha: 0.626,
            epochs: 3,
            learning_rate: 0.1,
            batch_size: 1024,
            negative_ratio: 3,
            seed: 0,
            deterministic: true,
            resample_negatives: false,
            accumulator_init: 1e-10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.negative_ratio == 0 {
            return Err(invalid("negative ratio must be at least 1"));
        }
        if !(self.accumulator_init >= 0.0 && self.accumulator_init.is_finite()) {
            return Err(invalid("accumulator init must be a non-negative number"));
        }
        Ok(())
    }
}
