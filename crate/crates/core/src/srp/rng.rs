//! Counter-based random streams.
//!
//! Every consumer of randomness derives a ChaCha8 stream from
//! `(seed, step)` as the key and a packed stream id, so the draws made for a
//! given block, branch and batch sample never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which input of an attention block a pooling call reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Residual = 0,
    Identity = 1,
}

/// Domain tags keep non-pooling consumers (init, shuffling, augmentation)
/// on streams disjoint from the pooling streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Pool = 0,
    Init = 1,
    Shuffle = 2,
    Augment = 3,
    Mixup = 4,
    Analysis = 5,
}

fn key(seed: u64, step: u64, domain: Domain) -> [u8; 32] {
    let mut k = [0u8; 32];
    k[..8].copy_from_slice(&seed.to_le_bytes());
    k[8..16].copy_from_slice(&step.to_le_bytes());
    k[16] = domain as u8;
    k
}

/// Opens the stream `(seed, step, domain, stream)`.
pub fn stream(seed: u64, step: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(seed, step, domain));
    rng.set_stream(stream);
    rng
}

/// Source of region-sampling randomness for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SrpRng {
    pub seed: u64,
    /// Training step; a fresh set of masks is drawn for every step.
    pub step: u64,
}

impl SrpRng {
    pub fn new(seed: u64, step: u64) -> Self {
        SrpRng { seed, step }
    }

    /// Independent stream for `(block, branch, sample)`.
    pub fn stream(&self, block: usize, branch: Branch, sample: usize) -> ChaCha8Rng {
        let id = ((block as u64) << 40) | ((branch as u64) << 32) | (sample as u64 & 0xffff_ffff);
        stream(self.seed, self.step, Domain::Pool, id)
    }
}
