//! Named, reproducible random substreams.
//!
//! Every random draw in the crate comes from a stream addressed by
//! `(master seed, trial, round, label)`. The address is hashed into a ChaCha
//! seed, so streams are independent of each other and of evaluation order:
//! trials can run in parallel, and two variants that share a label (say,
//! `"context"`) consume identical draws, which gives paired comparisons for
//! free.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The stream type handed to all sampling code.
pub type Stream = ChaCha8Rng;

/// Derive the substream for `(master_seed, trial, round, label)`.
///
/// Identical addresses yield identical streams on every platform.
pub fn substream(master_seed: u64, trial: u64, round: u64, label: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(b"distbandit.stream.v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(trial.to_le_bytes());
    hasher.update(round.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
