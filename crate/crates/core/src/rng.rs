//! Seed splitting and per-trial random substreams.
//!
//! Every Monte Carlo trial `t` draws from its own ChaCha stream `t` keyed by a
//! stage seed, so results do not depend on how trials are scheduled across
//! threads. Stage seeds are derived from the master seed by hashing a stage
//! label and an index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` for the stage named `label` and `index`.
///
/// The mapping is stable across platforms and releases.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(master ^ h).wrapping_add(index))
}

/// Factory for the per-trial streams of one stage.
#[derive(Clone, Debug)]
pub struct Substreams {
    base: ChaCha8Rng,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for trial `t`.
    pub fn trial(&self, t: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(t);
        rng
    }
}
