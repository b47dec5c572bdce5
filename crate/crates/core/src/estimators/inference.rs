//! Wald intervals and the studentized Fisher randomization test.

use std::collections::HashMap;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::dataset::ExperimentData;
use crate::error::{Error, Result};
use crate::ols::CovFlavor;
use crate::rng::{permute, stream, Purpose};

use super::{estimate, AnalysisLevel, EstimatorSpec};

/// Normal-reference interval `estimate ± z·se` and two-sided p-value.
///
/// A zero SE gives a degenerate interval; its p-value is 1 for a zero
/// estimate and 0 otherwise.
pub fn wald(estimate: f64, se: f64, level: f64) -> Result<(f64, f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} not in (0, 1)")));
    }
    if !estimate.is_finite() || !se.is_finite() || se < 0.0 {
        return Err(Error::NonFinite("estimate or standard error".into()));
    }
    let q = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let p = if se == 0.0 {
        if estimate == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        erfc((estimate / se).abs() / std::f64::consts::SQRT_2)
    };
    Ok((estimate - q * se, estimate + q * se, p.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrtResult {
    pub p_value: f64,
    pub t_obs: f64,
    pub draws: usize,
    pub valid_draws: usize,
    /// Draws whose statistic could not be computed.
    pub dropped_draws: usize,
}

fn studentize(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        estimate / se
    } else if estimate != 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    }
}

/// Permutation schedule: unit labels, or cluster labels broadcast to units.
enum Shuffler {
    Units(Vec<bool>),
    Clusters { unit_cluster: Vec<usize>, labels: Vec<bool> },
}

impl Shuffler {
    fn new(data: &ExperimentData, spec: &EstimatorSpec) -> Self {
        let clustered = spec.level != AnalysisLevel::Individual || spec.options.flavor == CovFlavor::Cr0;
        match data.cluster_id() {
            Some(ids) if clustered => {
                let mut index: HashMap<i64, usize> = HashMap::new();
                let mut labels = Vec::new();
                let unit_cluster = ids
                    .iter()
                    .zip(data.treatment())
                    .map(|(&id, &t)| {
                        *index.entry(id).or_insert_with(|| {
                            labels.push(t);
                            labels.len() - 1
                        })
                    })
                    .collect();
                Shuffler::Clusters { unit_cluster, labels }
            }
            _ => Shuffler::Units(data.treatment().to_vec()),
        }
    }

    fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<bool> {
        match self {
            Shuffler::Units(z) => permute(z, rng),
            Shuffler::Clusters { unit_cluster, labels } => {
                let p = permute(labels, rng);
                unit_cluster.iter().map(|&g| p[g]).collect()
            }
        }
    }
}

/// Randomization p-value of the studentized statistic `estimate / se`.
///
/// Assignments are re-drawn with arm sizes (or cluster arm sizes) held fixed.
/// Infinite draws count as exceedances; undefined or failed draws are dropped
/// and counted. `p = (1 + #{|t| ≥ |t_obs|}) / (valid + 1)`.
pub fn frt_studentized(data: &ExperimentData, spec: &EstimatorSpec, draws: usize, seed: u64) -> Result<FrtResult> {
    if draws == 0 {
        return Err(Error::InvalidArgument("randomization test needs at least one draw".into()));
    }
    let observed = estimate(data, spec)?;
    let t_obs = studentize(observed.estimate, observed.se);
    if t_obs.is_nan() {
        return Ok(FrtResult {
            p_value: 1.0,
            t_obs,
            draws,
            valid_draws: 0,
            dropped_draws: 0,
        });
    }
    let shuffler = Shuffler::new(data, spec);
    let stats: Vec<Option<f64>> = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream(seed, Purpose::Permutation, d);
            let z = shuffler.draw(&mut rng);
            let permuted = data.with_treatment(z).ok()?;
            let r = estimate(&permuted, spec).ok()?;
            let t = studentize(r.estimate, r.se);
            (!t.is_nan()).then_some(t)
        })
        .collect();
    let valid: Vec<f64> = stats.into_iter().flatten().collect();
    let dropped = draws - valid.len();
    if valid.len() * 10 < draws {
        return Err(Error::TooManyFailures {
            estimator: spec.label(),
            failed: dropped,
            total: draws,
            last: "permutation statistic undefined".into(),
        });
    }
    let abs_obs = t_obs.abs();
    let exceed = valid.iter().filter(|t| t.abs() >= abs_obs).count();
    Ok(FrtResult {
        p_value: (1 + exceed) as f64 / (valid.len() + 1) as f64,
        t_obs,
        draws,
        valid_draws: valid.len(),
        dropped_draws: dropped,
    })
}
