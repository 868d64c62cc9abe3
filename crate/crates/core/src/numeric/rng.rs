//! Keyed random streams.
//!
//! A [`StreamId`] names an independent ChaCha8 stream. Children are derived by
//! hashing, so the stream a replicate sees depends only on its id, never on
//! which worker runs it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifier of one reproducible random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub key: u64,
    pub stream: u64,
}

impl StreamId {
    pub fn root(seed: u64) -> Self {
        StreamId {
            key: splitmix64(seed),
            stream: 0,
        }
    }

    /// Sub-stream for a named purpose.
    pub fn child(self, tag: u64) -> Self {
        let key = splitmix64(self.key ^ splitmix64(self.stream.wrapping_add(0x5851_F42D)) ^ splitmix64(tag));
        StreamId { key, stream: 0 }
    }

    /// Stream for replicate `i` under this key.
    pub fn replicate(self, i: u64) -> Self {
        StreamId {
            key: self.key,
            stream: i,
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut z = self.key;
        for chunk in seed.chunks_exact_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Uniform in the open interval (0, 1).
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// 53-bit threshold for a right step with probability `omega`.
#[inline]
pub fn step_threshold(omega: f64) -> u64 {
    let scale = (1u64 << 53) as f64;
    (omega.clamp(0.0, 1.0) * scale).round() as u64
}

/// One step decision: true means a step to the right.
#[inline]
pub fn step_right<R: RngCore + ?Sized>(rng: &mut R, threshold: u64) -> bool {
    (rng.next_u64() >> 11) < threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a = StreamId::root(7).child(3).replicate(11);
        let x: Vec<u64> = (0..4).map({
            let mut r = a.rng();
            move |_| r.next_u64()
        }).collect();
        let mut r2 = a.rng();
        let y: Vec<u64> = (0..4).map(|_| r2.next_u64()).collect();
        assert_eq!(x, y);
        let mut r3 = a.replicate(12).rng();
        assert_ne!(x[0], r3.next_u64());
        let mut r4 = StreamId::root(7).child(4).replicate(11).rng();
        assert_ne!(x[0], r4.next_u64());
    }

    #[test]
    fn thresholds_hit_the_extremes_exactly() {
        let mut rng = StreamId::root(1).rng();
        for _ in 0..1000 {
            assert!(step_right(&mut rng, step_threshold(1.0)));
            assert!(!step_right(&mut rng, step_threshold(0.0)));
        }
    }

    #[test]
    fn open01_stays_inside() {
        let mut rng = StreamId::root(2).rng();
        for _ in 0..10_000 {
            let u = open01(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
