//! Counter-based splittable random streams.
//!
//! A stream is addressed by a root seed and a hierarchical path. The pair is
//! hashed into a ChaCha key, so any two distinct addresses give independent
//! generators and the same address always replays the same draws, no matter
//! in which order or on which thread streams are opened.

use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Generator type handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha12Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Sub-stream one level below this one.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            seed: self.seed,
            path,
        }
    }

    /// Sub-stream addressed by a multi-level relative path.
    pub fn descend(&self, rel: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(rel);
        Self {
            seed: self.seed,
            path,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = mix64(self.seed ^ 0x6A09_E667_F3BC_C909);
        for (depth, &p) in self.path.iter().enumerate() {
            let tagged = mix64(p.wrapping_add(GOLDEN.wrapping_mul(depth as u64 + 1)));
            state = mix64(state ^ tagged).wrapping_add(GOLDEN);
        }
        // length is folded in so that a prefix never aliases its extension
        state = mix64(state ^ (self.path.len() as u64).wrapping_mul(GOLDEN));
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        key
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        ChaCha12Rng::from_seed(self.key())
    }
}
