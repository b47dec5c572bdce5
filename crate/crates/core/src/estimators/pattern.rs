//! Missingness-pattern estimators: pattern-wise fits and their single-regression forms.

use crate::dataset::{pattern_table, ExperimentData};
use crate::error::{Error, Result};
use crate::matrix::{mean, Matrix};
use crate::missingness::{imp_features, mp_features, realized_indicator_subsets};
use crate::ols::{build_interacted, ColumnLabel, DesignMatrix, FeatureBlock};

use super::{
    estimate_raw, model_design, regress, Diagnostics, EstimatorSpec, Model, MpFallback, PatternFit,
    PatternMethod, RawEstimate, Strategy,
};

fn size_requirement(model: Model, observed: usize) -> String {
    match model {
        Model::F => format!("N >= {}", observed + 2),
        Model::L => format!("each arm >= {}", observed + 1),
    }
}

fn meets_threshold(model: Model, observed: usize, n0: usize, n1: usize) -> bool {
    match model {
        Model::F => n0 + n1 >= observed + 2,
        Model::L => n0.min(n1) > observed,
    }
}

/// Whether every realized pattern meets the size threshold of `model`.
pub(super) fn thresholds_hold(data: &ExperimentData, model: Model) -> bool {
    let table = pattern_table(data);
    (0..table.len()).all(|k| {
        let [n0, n1] = table.arm_counts[k];
        let observed = table.patterns[k].iter().filter(|&&m| !m).count();
        n0 > 0 && n1 > 0 && meets_threshold(model, observed, n0, n1)
    })
}

fn fall_back_to_mim(data: &ExperimentData, spec: &EstimatorSpec, reason: String) -> Result<RawEstimate> {
    let mut mim = spec.clone();
    mim.strategy = Strategy::Mim;
    let mut raw = estimate_raw(data, &mim)?;
    raw.diagnostics.fallbacks.push(reason);
    Ok(raw)
}

/// `Σ ρ_(m) τ̂_(m)` with squared SE `Σ ρ_(m)² ŝe²_(m)`.
pub(super) fn pattern_wise(data: &ExperimentData, spec: &EstimatorSpec, _c: &[f64]) -> Result<RawEstimate> {
    let table = pattern_table(data);
    let model = spec.model;
    let mut fits = Vec::with_capacity(table.len());
    let mut diagnostics = Diagnostics::default();
    for k in 0..table.len() {
        let label = table.label(k);
        let [n0, n1] = table.arm_counts[k];
        let size = table.counts[k];
        let observed: Vec<usize> = (0..data.j()).filter(|&j| !table.patterns[k][j]).collect();
        let too_small = || Error::PatternTooSmall {
            pattern: label.clone(),
            size,
            n_control: n0,
            n_treated: n1,
            requirement: size_requirement(model, observed.len()),
        };
        if n0 == 0 || n1 == 0 {
            return match spec.mp_fallback {
                MpFallback::Error => Err(too_small()),
                _ => fall_back_to_mim(
                    data,
                    spec,
                    format!("pattern {label} has an empty arm; used the indicator method"),
                ),
            };
        }
        let feasible = meets_threshold(model, observed.len(), n0, n1);
        let method = if feasible {
            PatternMethod::Regression
        } else {
            match spec.mp_fallback {
                MpFallback::Error => return Err(too_small()),
                MpFallback::FallbackToMim => {
                    return fall_back_to_mim(
                        data,
                        spec,
                        format!("pattern {label} too small (N={size}, arms {n0}/{n1}); used the indicator method"),
                    )
                }
                MpFallback::NeymanWithinPattern => {
                    diagnostics.fallbacks.push(format!(
                        "pattern {label} too small (N={size}, arms {n0}/{n1}); used the within-pattern difference in means"
                    ));
                    PatternMethod::Neyman
                }
            }
        };
        let sub = data.subset(&table.members(k))?;
        let mut block = FeatureBlock::empty(sub.n());
        if method == PatternMethod::Regression {
            for &j in &observed {
                block.push(sub.names().covariates[j].clone(), sub.covariates().col(j));
            }
        }
        let design = model_design(model, sub.treatment(), &block);
        let clusters = match spec.options.flavor {
            crate::ols::CovFlavor::Cr0 => Some(
                sub.cluster_id()
                    .ok_or_else(|| Error::InvalidArgument("CR0 covariance requires cluster labels".into()))?,
            ),
            _ => None,
        };
        let r = regress(&design, sub.outcome(), &spec.options, clusters)?;
        diagnostics
            .dropped_columns
            .extend(r.diagnostics.dropped_columns.iter().map(|c| format!("[{label}] {c}")));
        fits.push(PatternFit {
            pattern: label,
            size,
            n_control: n0,
            n_treated: n1,
            weight: table.proportions[k],
            estimate: r.estimate,
            se: r.se,
            method,
        });
    }
    let estimate = fits.iter().map(|f| f.weight * f.estimate).sum();
    let var: f64 = fits.iter().map(|f| (f.weight * f.se).powi(2)).sum();
    diagnostics.n_used = data.n();
    diagnostics.patterns = fits;
    Ok(RawEstimate {
        estimate,
        se: var.sqrt(),
        diagnostics,
    })
}

/// Interacted regression on `u^mp(c)`, centered at the full-sample mean.
pub fn mp_interacted_design(data: &ExperimentData, c: &[f64], cap: usize) -> Result<DesignMatrix> {
    Ok(build_interacted(data.treatment(), &mp_features(data, c, cap)?.block))
}

/// Additive pattern regression `(1, Z, x^imp(c)) ⊗ (1, f′ − f̄′)`.
///
/// Columns appear as `1, Z, x^imp, f′ − f̄′, Z(f′ − f̄′), x^imp_j (f′ − f̄′)`, a
/// reordering of the Kronecker product that leaves its span unchanged.
pub fn mp_additive_design(data: &ExperimentData, c: &[f64], cap: usize) -> Result<DesignMatrix> {
    let n = data.n();
    let x = imp_features(data, c)?;
    let subsets = realized_indicator_subsets(data, cap)?;
    let names = &data.names().covariates;
    let mut g: Vec<(String, Vec<f64>)> = Vec::with_capacity(subsets.len());
    for s in &subsets {
        let v: Vec<f64> = (0..n)
            .map(|i| if s.iter().all(|&j| data.mask().get(i, j)) { 1.0 } else { 0.0 })
            .collect();
        let m = mean(&v);
        let label = s.iter().map(|&j| format!("M_{}", names[j])).collect::<Vec<_>>().join("*");
        g.push((label, v.into_iter().map(|e| e - m).collect()));
    }
    let z: Vec<f64> = data.treatment_f64();
    let mut cols = Matrix::with_rows(n);
    let mut labels = Vec::new();
    cols.push_column(&vec![1.0; n]);
    labels.push(ColumnLabel::Intercept);
    cols.push_column(&z);
    labels.push(ColumnLabel::Treatment);
    for (k, col) in x.matrix.columns().enumerate() {
        cols.push_column(col);
        labels.push(ColumnLabel::Feature(x.labels[k].clone()));
    }
    for (label, v) in &g {
        cols.push_column(v);
        labels.push(ColumnLabel::Feature(label.clone()));
    }
    for (label, v) in &g {
        let zv: Vec<f64> = v.iter().zip(&z).map(|(a, b)| a * b).collect();
        cols.push_column(&zv);
        labels.push(ColumnLabel::TreatmentBy(label.clone()));
    }
    for (label, v) in &g {
        for (k, col) in x.matrix.columns().enumerate() {
            let xv: Vec<f64> = v.iter().zip(col).map(|(a, b)| a * b).collect();
            cols.push_column(&xv);
            labels.push(ColumnLabel::Feature(format!("{}*{label}", x.labels[k])));
        }
    }
    DesignMatrix::from_parts(cols, labels, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate;
    use crate::matrix::Mask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two covariates, four patterns, every pattern amply sized.
    fn rich(seed: u64) -> ExperimentData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 160;
        let z: Vec<bool> = (0..n).map(|i| (i / 4) % 2 == 0).collect();
        let pat = |i: usize| [(i % 4) & 1 == 1, (i % 4) & 2 == 2];
        let x = Matrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let mask = Mask::from_fn(n, 2, |i, j| pat(i)[j]);
        let y: Vec<f64> = (0..n)
            .map(|i| x.get(i, 0) * 2.0 - x.get(i, 1) + if z[i] { 1.0 } else { 0.0 } + rng.random::<f64>())
            .collect();
        ExperimentData::new(y, z, x, mask).unwrap()
    }

    #[test]
    fn aggregate_matches_pattern_wise() {
        for seed in 0..5 {
            let d = rich(seed);
            for m in [Model::F, Model::L] {
                let a = estimate(&d, &EstimatorSpec::new(Strategy::Mp, m).with_fallback(MpFallback::Error)).unwrap();
                let b = estimate(&d, &EstimatorSpec::new(Strategy::MpAggregate, m)).unwrap();
                assert!((a.estimate - b.estimate).abs() <= 1e-8 * a.estimate.abs().max(1.0), "{m}");
                assert!((a.se - b.se).abs() <= 1e-8 * a.se, "{m}");
            }
        }
    }

    #[test]
    fn undersized_pattern_policies() {
        let mut d = rich(1);
        // Keep one unit per arm in pattern 10 so its interacted fit is infeasible.
        let rows: Vec<usize> = (0..d.n()).filter(|&i| i % 4 != 1 || i < 8).collect();
        d = d.subset(&rows).unwrap();
        let spec = EstimatorSpec::new(Strategy::Mp, Model::L);
        let e = estimate(&d, &spec.clone().with_fallback(MpFallback::Error)).unwrap_err();
        assert!(matches!(e, Error::PatternTooSmall { ref pattern, .. } if pattern == "10"));
        let r = estimate(&d, &spec.clone()).unwrap();
        assert_eq!(r.diagnostics.fallbacks.len(), 1);
        assert!(r.diagnostics.patterns.iter().any(|p| p.method == PatternMethod::Neyman));
        let r = estimate(&d, &spec.with_fallback(MpFallback::FallbackToMim)).unwrap();
        let mim = estimate(&d, &EstimatorSpec::new(Strategy::Mim, Model::L)).unwrap();
        assert_eq!(r.estimate, mim.estimate);
        assert_eq!(r.diagnostics.fallbacks.len(), 1);
    }

    #[test]
    fn all_missing_pattern_is_difference_in_means() {
        let d = rich(2);
        let r = estimate(&d, &EstimatorSpec::new(Strategy::Mp, Model::L)).unwrap();
        let k = r.diagnostics.patterns.iter().position(|p| p.pattern == "11").unwrap();
        let table = pattern_table(&d);
        let sub = d.subset(&table.members(k)).unwrap();
        let n = estimate(&sub, &EstimatorSpec::neyman()).unwrap();
        assert!((r.diagnostics.patterns[k].estimate - n.estimate).abs() < 1e-12);
    }
}
