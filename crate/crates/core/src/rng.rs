//! Seeded random streams.
//!
//! Every Monte Carlo trial owns its own stream. Streams are derived from a
//! master seed by [`SeedSplitter::stream`]: the 256-bit ChaCha key is the
//! SplitMix64 expansion of `master`, and the ChaCha stream id is
//! `(domain << 32) | index`. Two different `(domain, index)` pairs therefore
//! never share keystream, and the mapping is stable across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::math;
use crate::C64;

pub type SimRng = ChaCha8Rng;

/// Stream domains used by the library and the harness.
pub mod domain {
    pub const EPISODE: u32 = 1;
    pub const NOISE: u32 = 2;
    pub const DATASET: u32 = 3;
    pub const COVARIANCE: u32 = 4;
    pub const VALIDATION: u32 = 5;
    pub const CHECKPOINT: u32 = 6;
    pub const HOLDOUT: u32 = 7;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, domain: u32, index: u32) -> SimRng {
        let mut state = self.master;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((u64::from(domain) << 32) | u64::from(index));
        rng
    }

    /// A splitter for a sub-experiment (e.g. one scenario), itself a pure
    /// function of the parent seed and `index`.
    pub fn child(&self, index: u64) -> Self {
        let mut state = self.master ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
        Self {
            master: splitmix64(&mut state),
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Circularly-symmetric complex Gaussian with total variance `variance`
/// (half in each of the real and imaginary parts).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = math::sqrt(variance / 2.0);
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
