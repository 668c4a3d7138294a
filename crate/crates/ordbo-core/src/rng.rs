//! Deterministic stream derivation. Every random decision in the library is
//! seeded from a master seed plus a textual tag, so runs replay bit-for-bit
//! regardless of thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a tag.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    splitmix(master ^ fnv1a(tag.as_bytes()))
}

/// Derives an independent deterministic generator.
pub fn derive_rng(master: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_stable_and_distinct() {
        let a = derive_seed(42, "init");
        let b = derive_seed(42, "init");
        let c = derive_seed(42, "acq:1");
        let d = derive_seed(43, "init");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);

        let mut r1 = derive_rng(7, "x");
        let mut r2 = derive_rng(7, "x");
        let v1: f64 = r1.gen();
        let v2: f64 = r2.gen();
        assert_eq!(v1.to_bits(), v2.to_bits());
    }
}
