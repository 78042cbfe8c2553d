use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator used for every stochastic routine in the crate.
pub type SimRng = ChaCha8Rng;

/// Seed plus substream label.
///
/// The generator is ChaCha8 keyed by `seed` (expanded through `SeedableRng::seed_from_u64`)
/// with its 64-bit stream selector set to `stream_id`. ChaCha is counter based, so the
/// same pair yields the same draws on every platform, and distinct `stream_id`s give
/// non-overlapping sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Same seed, different substream.
    pub const fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id,
        }
    }

    /// A child substream derived from this one; used when one operation needs several
    /// independent generators (e.g. one per emitter).
    pub fn child(&self, index: u64) -> Self {
        // splitmix64 finalizer keeps children of neighbouring stream ids apart
        let mut z = self
            .stream_id
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        self.with_stream(z ^ (z >> 31))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_spec_same_draws() {
        let spec = RngSpec::new(42, 7);
        let a: Vec<u64> = (0..16)
            .map({
                let mut r = spec.rng();
                move |_| r.random()
            })
            .collect();
        let b: Vec<u64> = (0..16)
            .map({
                let mut r = spec.rng();
                move |_| r.random()
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let x: u64 = RngSpec::new(1, 0).rng().random();
        let y: u64 = RngSpec::new(1, 1).rng().random();
        let z: u64 = RngSpec::new(1, 0).child(0).rng().random();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn frozen_first_draw() {
        // Pins the generator choice; changing it invalidates every seeded golden value.
        let v: u64 = RngSpec::new(0, 0).rng().random();
        assert_eq!(v, FIRST_DRAW_SEED0);
    }

    const FIRST_DRAW_SEED0: u64 = 13_080_132_717_333_068_652;
}
