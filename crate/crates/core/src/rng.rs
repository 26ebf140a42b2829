//! Keyed, counter-based random streams.
//!
//! Every stochastic draw in the crate comes from a ChaCha stream whose key is
//! derived from a root seed plus a path of integer labels (group index, user
//! index, epoch, ...). Outputs therefore depend only on the key path, never on
//! evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of a family of independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyedRng {
    key: u64,
}

impl KeyedRng {
    pub fn new(seed: u64) -> Self {
        KeyedRng { key: splitmix64(seed) }
    }

    /// Child family keyed by `label`.
    pub fn child(self, label: u64) -> Self {
        KeyedRng {
            key: splitmix64(self.key ^ splitmix64(label.wrapping_add(0x632B_E59B_D9B4_E019))),
        }
    }

    pub fn derive(self, labels: &[u64]) -> Self {
        labels.iter().fold(self, |acc, &l| acc.child(l))
    }

    /// Materialize the stream for this key.
    pub fn stream(self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut k = self.key;
        for chunk in seed.chunks_mut(8) {
            k = splitmix64(k);
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    pub fn stream_for(self, labels: &[u64]) -> StreamRng {
        self.derive(labels).stream()
    }
}

/// Labels separating the stream families of different subsystems.
pub mod domain {
    pub const DATASET: u64 = 0xD47A;
    pub const SPLIT: u64 = 0x5917;
    pub const INIT: u64 = 0x1417;
    pub const SHUFFLE: u64 = 0x54F1;
    pub const BITS: u64 = 0xB175;
    pub const CHANNEL_ERRORS: u64 = 0xC4E2;
    pub const FINETUNE: u64 = 0xF17E;
}
