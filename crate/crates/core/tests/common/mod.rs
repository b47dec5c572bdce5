#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use randadj::rng::complete_randomization_with;
use randadj::{ExperimentData, Mask, Matrix};

/// Random dataset with `n` units, `j` covariates, per-cell missingness `rate`
/// on every covariate but the first, and an outcome depending on both
/// covariates and indicators.
pub fn random_dataset(n: usize, j: usize, rate: f64, seed: u64) -> ExperimentData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = n / 2 + rng.random_range(0..n / 10 + 1) - n / 20;
    let z = complete_randomization_with(n, n1, &mut rng).unwrap();
    let x = Matrix::from_fn(n, j, |_, _| rng.random::<f64>() * 4.0 - 2.0);
    let mask = Mask::from_fn(n, j, |_, k| k > 0 && rng.random_bool(rate));
    let y = (0..n)
        .map(|i| {
            let mut v = if z[i] { 1.0 } else { 0.0 };
            for k in 0..j {
                let w = (k as f64 + 1.0) * if z[i] { 0.7 } else { -0.4 };
                v += w * x.get(i, k) + if mask.get(i, k) { 1.5 } else { 0.0 };
            }
            v + rng.random::<f64>() * 2.0
        })
        .collect();
    ExperimentData::new(y, z, x, mask).unwrap()
}

/// Dataset whose every realized pattern has at least `per_arm` units in each arm.
///
/// `patterns` lists the missingness patterns to realize; unit `i` gets
/// pattern `i % patterns.len()` and treatment alternates within a pattern.
pub fn patterned_dataset(patterns: &[Vec<bool>], per_arm: usize, seed: u64) -> ExperimentData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = patterns[0].len();
    let k = patterns.len();
    let n = k * per_arm * 2 + rng.random_range(0..k);
    let z: Vec<bool> = (0..n).map(|i| (i / k).is_multiple_of(2)).collect();
    let x = Matrix::from_fn(n, j, |_, _| rng.random::<f64>() * 3.0 - 1.0);
    let mask = Mask::from_fn(n, j, |i, c| patterns[i % k][c]);
    let y = (0..n)
        .map(|i| {
            let p = (i % k) as f64;
            let mut v = if z[i] { 0.5 + 0.3 * p } else { -0.2 * p };
            for c in 0..j {
                let slope = if z[i] { 1.0 + p * 0.2 } else { -0.5 + c as f64 };
                v += slope * x.get(i, c);
            }
            v + rng.random::<f64>() * 3.0 * (1.0 + x.get(i, 0).abs())
        })
        .collect();
    ExperimentData::new(y, z, x, mask).unwrap()
}

/// All 2^J patterns.
pub fn all_patterns(j: usize) -> Vec<Vec<bool>> {
    (0..1usize << j)
        .map(|b| (0..j).map(|c| b >> (j - 1 - c) & 1 == 1).collect())
        .collect()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Least squares plus HC0 variance through nalgebra's SVD, with no pruning.
/// Returns (coefficients, HC0 covariance). Requires full column rank.
pub fn nalgebra_ols(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = y.len();
    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, k| columns[k][i]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let inv = xtx.clone().try_inverse().expect("full rank oracle design");
    let beta = &inv * x.transpose() * &yv;
    let e = &yv - &x * &beta;
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let row = x.row(i).transpose();
        meat += &row * row.transpose() * (e[i] * e[i]);
    }
    let cov = &inv * meat * &inv;
    (beta.iter().copied().collect(), cov)
}

/// All subsets of size `k` from `0..n`, as indicator vectors.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize == k {
            out.push((0..n).map(|i| bits >> i & 1 == 1).collect());
        }
    }
    out
}
