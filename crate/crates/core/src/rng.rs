//! Seed derivation for independent random streams.
//!
//! Every stochastic step (client sampling, epoch shuffles, initialization,
//! data generation) draws from its own ChaCha8 stream keyed by a tuple of
//! integers, so results never depend on the order in which streams are used.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_INIT: u64 = 0x494e_4954;
pub(crate) const TAG_SAMPLE: u64 = 0x5341_4d50;
pub(crate) const TAG_SHUFFLE: u64 = 0x5348_5546;
pub(crate) const TAG_BLOBS: u64 = 0x424c_4f42;
pub(crate) const TAG_PARTITION: u64 = 0x5041_5254;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Produces the per-epoch visiting order used by every training loop.
///
/// The permutation for epoch `e` of stream `s` depends only on
/// `(seed, s, e)`. The centralized trainer uses stream 0 and federated
/// client `k` uses stream `k` with a global epoch counter
/// `round * local_epochs + j`, so a lone client reproduces the centralized
/// batch schedule exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochShuffler {
    seed: u64,
    stream: u64,
    first_epoch: u64,
}

impl EpochShuffler {
    pub fn new(seed: u64, stream: u64, first_epoch: u64) -> Self {
        Self {
            seed,
            stream,
            first_epoch,
        }
    }

    /// Permutation of `0..len` for the `local_epoch`-th epoch of this shuffler.
    pub fn order(&self, local_epoch: u64, len: usize) -> Vec<usize> {
        let epoch = self.first_epoch + local_epoch;
        let mut rng = stream(self.seed, &[TAG_SHUFFLE, self.stream, epoch]);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        order
    }
}
