//! Reproducible random streams.
//!
//! Every random quantity comes from `ChaCha8Rng`. A master seed plus a
//! purpose tag selects the key; the replicate or draw counter selects the
//! stream. Work items therefore draw the same numbers no matter which thread
//! runs them or in what order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seed used by the CLI and the scenario examples when none is given.
pub const DEFAULT_SEED: u64 = 2023;

/// Purpose tags keep streams for different jobs disjoint under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Population,
    Assignment,
    Permutation,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Population => 0x5EED_0001,
            Purpose::Assignment => 0x5EED_0002,
            Purpose::Permutation => 0x5EED_0003,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Generator for work item `index` of the given purpose.
pub fn stream(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ purpose.tag()));
    rng.set_stream(index);
    rng
}

/// Uniform draw from all assignments with exactly `n1` treated out of `n`.
pub fn complete_randomization(n: usize, n1: usize, seed: u64) -> Result<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    complete_randomization_with(n, n1, &mut rng)
}

pub fn complete_randomization_with(n: usize, n1: usize, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
    if n1 == 0 || n1 >= n {
        return Err(Error::InvalidArgument(format!(
            "need 0 < N1 < N, got N={n}, N1={n1}"
        )));
    }
    let mut z = vec![false; n];
    z[..n1].iter_mut().for_each(|v| *v = true);
    z.shuffle(rng);
    Ok(z)
}

/// Uniform permutation of an arbitrary label vector (arm sizes preserved).
pub fn permute<T: Clone>(labels: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut v = labels.to_vec();
    v.shuffle(rng);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sums_and_bounds() {
        for s in 0..50 {
            let z = complete_randomization(5, 2, s).unwrap();
            assert_eq!(z.iter().filter(|&&b| b).count(), 2);
        }
        assert!(complete_randomization(5, 0, 1).is_err());
        assert!(complete_randomization(5, 5, 1).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            complete_randomization(100, 20, 9).unwrap(),
            complete_randomization(100, 20, 9).unwrap()
        );
        let a: u64 = stream(1, Purpose::Assignment, 3).random();
        let b: u64 = stream(1, Purpose::Assignment, 3).random();
        let c: u64 = stream(1, Purpose::Assignment, 4).random();
        let d: u64 = stream(1, Purpose::Permutation, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn two_unit_uniformity() {
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let first = (0..draws)
            .filter(|_| complete_randomization_with(2, 1, &mut rng).unwrap()[0])
            .count();
        let p = first as f64 / draws as f64;
        // 5 standard errors of a fair coin at 1e5 draws.
        assert!((p - 0.5).abs() < 5.0 * (0.25f64 / draws as f64).sqrt());
    }
}
