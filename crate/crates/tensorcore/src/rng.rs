//! Named, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit value. Child streams
//! are derived from the parent's key and a name, never from the parent's
//! position, so splitting does not perturb the parent and the same
//! `(seed, path)` always yields the same numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive(key: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded into the parent key.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(key ^ splitmix64(h))
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        Self::from_key(splitmix64(seed))
    }

    fn from_key(key: u64) -> Self {
        Self {
            key,
            inner: ChaCha8Rng::seed_from_u64(key),
        }
    }

    /// Independent child stream identified by `name`.
    pub fn split(&self, name: &str) -> Self {
        Self::from_key(derive(self.key, name))
    }

    /// Child stream identified by `name` and an index, e.g. one per worker.
    pub fn split_indexed(&self, name: &str, index: u64) -> Self {
        Self::from_key(derive(derive(self.key, name), &index.to_string()))
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
