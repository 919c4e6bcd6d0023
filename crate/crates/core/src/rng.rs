//! Seed derivation.
//!
//! Every stochastic component draws from its own ChaCha stream whose seed is
//! derived from the run seed and a component name:
//!
//! ```text
//! stream_seed = splitmix64(run_seed ^ fnv1a64(component))
//! ```
//!
//! Both hashes are fixed here so the scheme is stable across platforms and
//! toolchains (unlike `std::hash::DefaultHasher`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream seed for `component` under `seed`.
pub fn derive_seed(seed: u64, component: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(component.as_bytes()))
}

/// Stream seed for an indexed sub-stream (epoch, step, query id, ...).
pub fn derive_indexed(seed: u64, component: &str, index: u64) -> u64 {
    splitmix64(derive_seed(seed, component) ^ splitmix64(index))
}

pub fn stream(seed: u64, component: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, component))
}

pub fn indexed_stream(seed: u64, component: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_indexed(seed, component, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn components_get_distinct_streams() {
        assert_ne!(derive_seed(7, "dropout"), derive_seed(7, "shuffle"));
        assert_ne!(derive_seed(7, "dropout"), derive_seed(8, "dropout"));
        assert_eq!(derive_indexed(1, "x", 3), derive_indexed(1, "x", 3));
        assert_ne!(derive_indexed(1, "x", 3), derive_indexed(1, "x", 4));
    }
}
