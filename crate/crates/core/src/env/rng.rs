//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, counter)`, so a reset with
//! the same seed produces the same scene on every platform regardless of how
//! many values other consumers have drawn.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a `(seed, stream, counter)` triple into 64 uniformly distributed bits.
#[inline]
pub fn hash3(seed: u64, stream: u64, counter: u64) -> u64 {
    let key = splitmix64(seed ^ splitmix64(stream.wrapping_mul(GOLDEN) ^ 0x5851_F42D_4C95_7F2D));
    splitmix64(key ^ counter.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Well-known stream ids. Keeping them fixed keeps recorded data stable when a
/// new consumer is added.
pub mod streams {
    pub const SCENE: u64 = 1;
    pub const EXPERT: u64 = 2;
    pub const POINT_CLOUD: u64 = 3;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream, counter: 0 }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = hash3(self.seed, self.stream, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform point in a disc of the given radius centred on the origin.
    pub fn in_disc(&mut self, radius: f64) -> [f64; 2] {
        let r = radius * self.next_f64().sqrt();
        let a = std::f64::consts::TAU * self.next_f64();
        [r * a.cos(), r * a.sin()]
    }
}
