//! Counter-based random number generation.
//!
//! All randomness in the toolkit flows through [`NoiseStream`]: a stateless
//! generator that maps `(key, counter)` to a value. Because there is no
//! mutable generator state, a consumer can draw at arbitrary counters in any
//! order and always get the same value — which is what lets the step-halving
//! boundary policy insert extra sub-steps without shifting the noise seen by
//! later steps, and lets parallel workers share nothing.
//!
//! The construction is the splitmix64 output function evaluated on an
//! affinely advanced state: `value(key, c) = mix64(key + (c + 1) * GAMMA)`,
//! i.e. the splitmix64 sequence seeded at `key`, read at index `c`. Sub-keys
//! are derived the same way, `derive_key(key, i) = value-bits(key, i)`, so a
//! hierarchy (master seed -> path key -> {brownian, jump} keys) is cheap and
//! documented by this one formula.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The splitmix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn raw(key: u64, counter: u64) -> u64 {
    mix64(key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Derive a sub-stream key: `derive_key(k, i)` is the i-th entry of the
/// splitmix64 sequence seeded at `k`.
#[inline]
pub fn derive_key(key: u64, index: u64) -> u64 {
    raw(key, index)
}

/// A keyed, counter-addressed noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    key: u64,
}

impl NoiseStream {
    pub fn new(key: u64) -> Self {
        NoiseStream { key }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Uniform draw in (0, 1] at the given counter. The open lower end keeps
    /// `ln(u)` finite for Box-Muller and exponential sampling.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        // 53 high bits, shifted into (0, 1].
        (((raw(self.key, counter) >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal draw at the given counter (Box-Muller on the uniforms
    /// at counters 2c and 2c+1; the sine branch is discarded so that one
    /// counter maps to exactly one normal).
    #[inline]
    pub fn normal(&self, counter: u64) -> f64 {
        let u1 = self.uniform(2 * counter);
        let u2 = self.uniform(2 * counter + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exponential draw with the given mean at the given counter.
    #[inline]
    pub fn exponential(&self, counter: u64, mean: f64) -> f64 {
        -mean * self.uniform(counter).ln()
    }
}

/// A stream with a sequential cursor, for consumers that draw an unknown
/// number of values (e.g. compound Poisson arrival sampling).
#[derive(Debug, Clone)]
pub struct CounterCursor {
    stream: NoiseStream,
    next: u64,
}

impl CounterCursor {
    pub fn new(stream: NoiseStream) -> Self {
        CounterCursor { stream, next: 0 }
    }

    pub fn uniform(&mut self) -> f64 {
        let c = self.next;
        self.next += 1;
        self.stream.uniform(c)
    }

    pub fn normal(&mut self) -> f64 {
        let c = self.next;
        self.next += 1;
        self.stream.normal(c)
    }

    pub fn exponential(&mut self, mean: f64) -> f64 {
        let c = self.next;
        self.next += 1;
        self.stream.exponential(c, mean)
    }
}
