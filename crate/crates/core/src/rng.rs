//! Counter-based sampling.
//!
//! Every random draw in a run is addressed by a [`SampleKey`]. The key is
//! packed verbatim into a 256-bit ChaCha8 key, so the stream for a given
//! `(seed, worker, step, sample)` does not depend on which thread evaluates it
//! or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleKey {
    pub seed: u64,
    pub worker: u64,
    pub step: u64,
    pub sample: u64,
}

impl SampleKey {
    pub fn new(seed: u64, worker: usize, step: u64, sample: usize) -> Self {
        SampleKey { seed, worker: worker as u64, step, sample: sample as u64 }
    }

    pub fn stream(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.worker.to_le_bytes());
        key[16..24].copy_from_slice(&self.step.to_le_bytes());
        key[24..].copy_from_slice(&self.sample.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// Worker index reserved for draws that do not belong to a simulated worker
/// (constant estimation, dataset synthesis).
pub(crate) const AUX_WORKER: usize = usize::MAX;
