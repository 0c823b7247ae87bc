//! Embedding inference, attribute probing and concept erasure for
//! follow/recommendation networks.
//!
//! The pipeline: ingest a typed edge list into a [`graph::HinGraph`], train a
//! TransE embedding ([`transe`]), find directions correlated with user
//! attributes ([`probe`]), project them out ([`erase`]) and measure how
//! recommendations change ([`recommend`]). [`bench`] generates synthetic
//! worlds with known answers for all of the above.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod erase;
pub mod error;
pub mod eval;
pub mod graph;
pub mod probe;
pub mod recommend;
pub mod rng;
pub mod scaling;
pub mod stats;
pub mod transe;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
