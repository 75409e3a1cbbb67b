//! Seeded patch-location sampling and seed derivation.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Draws `count` distinct row-major cell indices from a `grid_h x grid_w` grid.
///
/// Deterministic given `seed`; with `count == grid_h * grid_w` the result is a
/// permutation of every cell.
pub fn sample_locations(grid_h: usize, grid_w: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    let cells = grid_h * grid_w;
    if count > cells {
        return Err(Error::Capacity { requested: count, available: cells });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, cells, count).into_vec())
}

/// Mixes a base seed with a stream identifier (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_count_is_permutation() {
        let mut s = sample_locations(4, 5, 20, 3).unwrap();
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_distinct() {
        let a = sample_locations(128, 128, 256, 11).unwrap();
        assert_eq!(a, sample_locations(128, 128, 256, 11).unwrap());
        assert_ne!(a, sample_locations(128, 128, 256, 12).unwrap());
        let mut d = a.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 256);
        assert!(a.iter().all(|&i| i < 128 * 128));
    }

    #[test]
    fn capacity() {
        assert_eq!(sample_locations(2, 2, 5, 0), Err(Error::Capacity { requested: 5, available: 4 }));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 9), derive_seed(7, 9));
    }
}
