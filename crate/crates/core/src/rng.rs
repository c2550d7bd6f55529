//! Deterministic derivation of independent random streams from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for the stream labelled `(a, b)` under `root`.
pub fn derive_seed(root: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ a) ^ b)
}

/// Random stream labelled `(a, b)` under `root`. Streams depend only on their labels,
/// so results do not change with the order or thread in which they are consumed.
pub fn stream(root: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 1, 2), |r, _: u64| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 1, 2), |r, _: u64| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(derive_seed(7, 1, 2), derive_seed(7, 2, 1));
        assert_ne!(derive_seed(7, 0, 0), derive_seed(8, 0, 0));
    }
}
