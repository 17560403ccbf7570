//! Counter-based pseudo-random generator with a documented draw order.
//!
//! Every stochastic operation in this crate (augmentation, phantom noise,
//! fold shuffling) draws from [`CounterRng`], so results are reproducible
//! bit-for-bit from `(seed, stream)` alone. The generator is the SplitMix64
//! output function applied to a 64-bit counter: draw `i` of stream `s` under
//! seed `k` is
//!
//! ```text
//! out_i = mix64((k ^ mix64(s)) + (i + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! which makes the sequence a pure function of the draw index — two
//! implementations that agree on the draw order agree on every output.
//!
//! Draw-order conventions used by the helpers:
//! - `next_f64` consumes one `u64` and maps the top 53 bits to `[0, 1)`.
//! - `normal` consumes exactly two `u64` draws (Box–Muller, cosine branch;
//!   the sine value is discarded).
//! - `below(n)` consumes one draw and reduces by the multiply-shift method.
//! - `shuffle` runs Fisher–Yates from the last element down, one `below`
//!   draw per swap.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based generator (SplitMix64 core).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream under the same seed, e.g. one stream per case.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        CounterRng {
            key: seed ^ mix64(stream),
            counter: 0,
        }
    }

    /// Number of draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// `true` with probability `p`. One draw.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal deviate; always consumes two draws.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
