//! Deterministic random source.
//!
//! A self-contained xoshiro256** generator seeded through splitmix64. Every
//! random quantity in the crate flows through an explicit `Rng` value, so a
//! run is bit-reproducible from its seed and independent streams can be
//! forked for sub-components.

use libm::{cos, log, sqrt};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** pseudo-random generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = seed;
        Rng {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    /// Seeds from two words, e.g. a base seed plus a stream index.
    pub fn seed_from_pair(a: u64, b: u64) -> Self {
        let mut sm = a;
        let mixed = splitmix64(&mut sm) ^ b.wrapping_mul(GOLDEN_GAMMA);
        Rng::seed_from_u64(mixed)
    }

    /// Derives an independent child stream, advancing this generator.
    pub fn fork(&mut self) -> Rng {
        Rng::seed_from_pair(self.next_u64(), self.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1]
            .wrapping_mul(5)
            .rotate_left(7)
            .wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform on [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval, clamped away from 0 and 1 so that
    /// `log(-log(u))`-style transforms stay finite.
    pub fn open_unit(&mut self) -> f64 {
        const EPS: f64 = 1e-12;
        self.next_f64().clamp(EPS, 1.0 - EPS)
    }

    /// Unbiased integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw (Box-Muller, cosine branch).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.open_unit();
        let u2 = self.next_f64();
        sqrt(-2.0 * log(u1)) * cos(2.0 * core::f64::consts::PI * u2)
    }
}
