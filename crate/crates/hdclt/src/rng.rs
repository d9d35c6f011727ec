//! Counter-based random substreams.
//!
//! Every consumer derives its generator from `(seed, replication, role)`, so
//! replications can run in any order on any number of workers without changing
//! a single drawn value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream-role labels used across the crate. Kept in one place so tests can
/// reproduce internal streams.
pub mod role {
    /// Main sample rows of a batch.
    pub const ROWS: &str = "rows";
    /// Resampled index and fresh row of the exchangeable pair.
    pub const PAIR: &str = "pair";
    /// Independent copy used by the perturbation family.
    pub const COPY: &str = "copy";
    /// Reference Gaussian draws.
    pub const REFERENCE: &str = "reference";
    /// Auxiliary draws (random rectangles, random levels).
    pub const AUX: &str = "aux";
}

/// Deterministic generator for one `(seed, replication, role)` cell.
pub fn substream(seed: u64, replication: u64, role: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(replication.to_le_bytes());
    hasher.update([role.len() as u8]);
    hasher.update(role.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
