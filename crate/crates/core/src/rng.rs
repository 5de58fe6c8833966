//! Deterministic random streams.
//!
//! Every stochastic job draws from its own [`RngStream`], derived from a
//! master seed and a key path (for example `[domain::TRIAL, w_bits, trial]`).
//! Streams are independent of execution order and thread count, so a trial
//! produces the same numbers whether it runs alone, in a batch, or in a
//! worker pool.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Key-path prefixes that keep the streams of different jobs disjoint.
pub mod domain {
    pub const TRIAL: u64 = 0x7472_6961_6c00_0001;
    pub const TRIAL_BASELINE: u64 = 0x7472_6961_6c00_0002;
    pub const POSTERIOR: u64 = 0x706f_7374_0000_0003;
    pub const DECREMENT: u64 = 0x6465_6372_0000_0004;
    pub const PATHS: u64 = 0x7061_7468_0000_0005;
    pub const DIRECT: u64 = 0x6469_7265_6374_0006;
    pub const RADIUS: u64 = 0x7261_6469_7573_0007;
    pub const BOOTSTRAP: u64 = 0x626f_6f74_0000_0008;
    pub const FORWARD: u64 = 0x6677_6400_0000_0009;
    pub const GRID: u64 = 0x6772_6964_0000_000a;
}

/// Source of standard normal and uniform variates consumed by the samplers.
pub trait NoiseSource {
    fn gaussian(&mut self) -> f64;

    /// Uniform on `[0, 1)`.
    fn uniform(&mut self) -> f64;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 stream keyed by `(master_seed, key path)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, key: &[u64]) -> Self {
        let mut state = master_seed;
        let mut acc = splitmix64(&mut state);
        for (depth, &k) in key.iter().enumerate() {
            let mut s = k ^ (depth as u64).wrapping_mul(0xA076_1D64_78BD_642F);
            acc = acc.rotate_left(17) ^ splitmix64(&mut s);
            state ^= acc;
            acc = splitmix64(&mut state);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl NoiseSource for RngStream {
    #[inline]
    fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    #[inline]
    fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

/// Deterministic stream returning zero for every Gaussian draw.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn gaussian(&mut self) -> f64 {
        0.0
    }

    fn uniform(&mut self) -> f64 {
        0.0
    }
}

/// Replays a fixed list of Gaussian draws, then zeros.
#[derive(Clone, Debug, Default)]
pub struct ScriptedNoise {
    draws: Vec<f64>,
    next: usize,
}

impl ScriptedNoise {
    pub fn new(draws: Vec<f64>) -> Self {
        Self { draws, next: 0 }
    }
}

impl NoiseSource for ScriptedNoise {
    fn gaussian(&mut self) -> f64 {
        let z = self.draws.get(self.next).copied().unwrap_or(0.0);
        self.next += 1;
        z
    }

    fn uniform(&mut self) -> f64 {
        0.0
    }
}
