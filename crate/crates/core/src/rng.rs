//! Counter-based random streams.
//!
//! Every random draw in the crate is addressed by `(seed, purpose, index,
//! block)`:
//!
//! - `seed` and `purpose` select a ChaCha8 key,
//! - `index` selects the ChaCha stream (the particle index for initial
//!   conditions and Brownian increments, 0 for the SGD data stream),
//! - `block` positions the stream at a fixed word offset, so the noise of
//!   particle `i` at step `k` is reachable without generating steps `0..k`.
//!
//! Adding particles therefore never perturbs the streams of existing
//! particles, and reordering the work across threads changes nothing.
//! Gaussian variates use Box–Muller, which consumes exactly two 64-bit words
//! per pair of normals.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is mixed into the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Data = 2,
    Brownian = 3,
    Frozen = 4,
    Rotation = 5,
    Histogram = 6,
    Auxiliary = 7,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, purpose: Purpose, index: u64) -> Self {
        let mut state = seed ^ (purpose as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(index);
        Self { inner }
    }

    /// Stream positioned at `block * words_per_block` 32-bit words.
    pub fn at_block(seed: u64, purpose: Purpose, index: u64, block: u64, words_per_block: u64) -> Self {
        let mut rng = Self::new(seed, purpose, index);
        rng.inner.set_word_pos(block as u128 * words_per_block as u128);
        rng
    }

    /// 32-bit words consumed by [`StreamRng::fill_normal`] for `len` values.
    pub fn normal_words(len: usize) -> u64 {
        4 * len.div_ceil(2) as u64
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform index in `0..n` (multiply-shift; bias below 2^-40 for the sizes used here).
    pub fn index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(core::f64::consts::TAU * u2);
        (r * c, r * s)
    }

    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_mut(2);
        for c in &mut chunks {
            let (a, b) = self.normal_pair();
            c[0] = a;
            if c.len() == 2 {
                c[1] = b;
            }
        }
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand_chacha::rand_core::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
