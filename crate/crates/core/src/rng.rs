//! Seeded, splittable random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by a
//! `(master seed, purpose)` pair and selected by the replica index. ChaCha is
//! counter based, so stream `r` does not depend on how many other streams were
//! created or on which thread consumed them. Results are therefore
//! reproducible from `(seed, replicas)` alone, whatever the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Distinguishes independent uses of one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Direct,
    Conditional,
    Hybrid,
    Background,
    Test(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Direct => 0x01,
            Purpose::Conditional => 0x02,
            Purpose::Hybrid => 0x03,
            Purpose::Background => 0x04,
            Purpose::Test(k) => 0x1000 + k,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    master_seed: u64,
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        StreamFactory { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// The stream for one replica of one purpose.
    pub fn stream(&self, purpose: Purpose, replica: u64) -> SimRng {
        let mut state = self.master_seed ^ purpose.tag().wrapping_mul(0xd6e8_feb8_6659_fd93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replica);
        rng
    }
}
