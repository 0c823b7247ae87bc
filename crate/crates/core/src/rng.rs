//! Seeded random streams.
//!
//! Every randomized operation draws from a ChaCha8 generator keyed by the
//! caller's seed plus a fixed stream id, so unrelated consumers of the same
//! seed never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub(crate) mod stream {
    pub const SPLIT: u64 = 0x10;
    pub const NEGATIVES: u64 = 0x20;
    pub const INIT: u64 = 0x30;
    pub const SHUFFLE: u64 = 0x40;
    pub const VALIDATION: u64 = 0x50;
    pub const HELDOUT: u64 = 0x60;
    pub const BASELINE: u64 = 0x70;
    pub const PERMUTATION: u64 = 0x80;
    pub const BOOTSTRAP: u64 = 0x90;
    pub const WORLD: u64 = 0xA0;
    pub const PERTURB: u64 = 0xB0;
    pub const SCALING: u64 = 0xC0;
}

/// Generator for `(seed, stream)`.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a seed with an index (replicate, permutation, epoch) so that
/// neighbouring indices give unrelated seeds.
pub fn derive(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
