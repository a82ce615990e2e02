//! Deterministic, counter-based random streams.
//!
//! Each particle owns its own stream, derived from the master seed and the
//! particle index. A stream is 16 bytes of state and can be recreated from
//! scratch at any time, which is what makes two-pass gradient assembly and
//! thread-count-independent runs bit-reproducible: replaying particle `n`
//! never depends on how work was partitioned across workers.
//!
//! The generator is the SplitMix64 construction: the stream walks an additive
//! orbit of the golden-ratio increment and finalizes each state with a strong
//! avalanche mix. Not cryptographic, and no low-discrepancy properties are
//! claimed.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Root seed of a whole simulation. Identical seed + identical configuration
/// implies identical output, regardless of thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MasterSeed(pub u64);

impl MasterSeed {
    /// Derive the replayable stream for particle `n`.
    ///
    /// Pure function of `(seed, n)`: calling it twice yields streams that
    /// produce identical draw sequences.
    #[inline]
    pub fn stream(self, n: u64) -> ParticleStream {
        // Distinct n map to distinct keys (odd multiplier, bijective mix).
        let key = mix64(self.0 ^ n.wrapping_add(1).wrapping_mul(GOLDEN));
        ParticleStream { key, counter: 0 }
    }
}

/// Counter-based random stream owned by a single particle.
#[derive(Debug, Clone, Copy)]
pub struct ParticleStream {
    key: u64,
    counter: u64,
}

impl ParticleStream {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        let state = self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN));
        self.counter += 1;
        mix64(state)
    }

    /// Next uniform draw in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Pair of independent standard normal draws (Box-Muller).
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // Map to (0, 1] so the log is finite.
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        (radius * angle.cos(), radius * angle.sin())
    }
}
