//! Deterministic seed derivation.
//!
//! Every random stream in the crate comes from a root seed plus a path of
//! stream labels, mixed through splitmix64. Two different paths give
//! statistically independent ChaCha streams, and the same path always gives
//! the same stream regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and a path of stream labels.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &label| splitmix64(acc ^ splitmix64(label.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(root: u64, path: &[u64]) -> Rng {
    rng_from_seed(derive_seed(root, path))
}

/// Stream labels used across modules so that seeds never collide by accident.
pub mod stream {
    pub const MU_SAMPLE: u64 = 1;
    pub const GRID: u64 = 2;
    pub const COMPONENT: u64 = 3;
    pub const LIPSCHITZ: u64 = 4;
    pub const INPUTS: u64 = 5;
    pub const TARGETS: u64 = 6;
    pub const CONTRACTION: u64 = 7;
    pub const MEMBERS: u64 = 8;
    pub const CASCADE: u64 = 9;
    pub const GRAFT: u64 = 10;
    pub const TRIAL: u64 = 11;
    pub const POOL: u64 = 12;
    pub const SIGN_PLUS: u64 = 13;
    pub const SIGN_MINUS: u64 = 14;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derivation_is_deterministic_and_path_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        assert_ne!(derive_seed(7, &[]), derive_seed(7, &[0]));
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = derived_rng(3, &[4]);
        let mut b = derived_rng(3, &[4]);
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }
}
