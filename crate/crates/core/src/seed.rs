//! Named, splittable seed streams derived from a single master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator used throughout the toolkit.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

/// A master seed from which independent sub-streams are derived by name and index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn seed(&self, stream: &str, index: u64) -> u64 {
        splitmix64(splitmix64(self.master ^ fnv1a(stream.as_bytes())) ^ splitmix64(index.wrapping_add(0x5851_f42d)))
    }

    pub fn rng(&self, stream: &str, index: u64) -> SimRng {
        SimRng::seed_from_u64(self.seed(stream, index))
    }

    /// A child stream, e.g. one per experiment arm.
    pub fn child(&self, stream: &str) -> SeedStream {
        SeedStream { master: self.seed(stream, u64::MAX) }
    }
}
