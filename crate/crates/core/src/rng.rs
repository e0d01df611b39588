//! Self-contained deterministic random number generator.
//!
//! Everything random in this crate (weight init, minibatch sampling,
//! synthetic scene layout) flows through this one generator so that a run
//! is reproducible bit-for-bit from its seed on any platform. The core is
//! a 64-bit linear congruential step (Knuth's MMIX multiplier) whose state
//! is whitened with a full 64-bit finalizer (xorshift-multiply rounds), so
//! the weak low bits of the raw congruence never reach consumers; doubles
//! take the top 53 bits. No external RNG crate is used on purpose: the
//! stream must never change out from under recorded runs.

/// Deterministic 64-bit generator. Cheap to copy; copies continue the
/// stream independently from the point of the copy.
#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

const MUL: u64 = 6364136223846793005;
const INC: u64 = 1442695040888963407;

/// SplitMix64 finalizer; used to scramble seeds and derive substreams.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        Lcg64 { state: mix(seed) }
    }

    /// Derives an independent generator for `(self's seed, tag)`. Used to
    /// give every scene index or parameter tensor its own stream so that
    /// generating item `i` never depends on whether item `i - 1` was
    /// generated first.
    pub fn substream(&self, tag: u64) -> Lcg64 {
        Lcg64 {
            state: mix(self.state ^ mix(tag)),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(MUL).wrapping_add(INC);
        let mut z = self.state;
        z = (z ^ (z >> 33)).wrapping_mul(0xff51afd7ed558ccd);
        z = (z ^ (z >> 33)).wrapping_mul(0xc4ceb9fe1a85ec53);
        z ^ (z >> 33)
    }

    /// Uniform in `[0, 1)` using the top 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` via 128-bit multiply (no modulo bias
    /// worth caring about at these ranges, and fully portable).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Bernoulli draw.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box–Muller (cosine branch). Two uniform draws
    /// per sample; the first is shifted into `(0, 1]` so `ln` is finite.
    pub fn normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Normal with the given standard deviation.
    pub fn normal_scaled(&mut self, std_dev: f64) -> f64 {
        self.normal() * std_dev
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
