//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spu_core::circuit::{CircuitParams, DeviceTemplate};
use spu_core::linalg::random_spd;

/// Random SPD matrix of size `d`, reproducible from `seed`.
pub fn spd(d: usize, seed: u64) -> DMatrix<f64> {
    random_spd(d, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `n`-cell board on the 6.5 nF bank with every coupling switched on.
pub fn board(n: usize) -> CircuitParams {
    CircuitParams::uniform_configuration(&DeviceTemplate::nominal(), n, 3, 1).expect("uniform board is realizable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        assert_eq!(spd(5, 1), spd(5, 1));
        assert!(spu_core::linalg::min_eigenvalue(&spd(5, 1)) > 0.0);
        assert_eq!(board(8).dim(), 8);
    }
}
