//! Feature blocks for the missing-covariate strategies.
//!
//! Column order inside every block is fixed because the least-squares
//! pruning keeps the first member of any collinear set:
//!
//! * imputed covariates `x^imp(c)` in covariate order;
//! * missingness indicators of incomplete columns, in covariate order;
//! * for the pattern block, indicator products ordered by subset size and
//!   then lexicographically, followed by `x^imp_j` times each product.

use std::collections::BTreeSet;

use crate::dataset::{complete_covariate_set, pattern_table, ExperimentData};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ols::FeatureBlock;

/// Largest number of incomplete columns accepted by [`mp_features`] by default.
pub const DEFAULT_PATTERN_CAP: usize = 12;

/// Covariates with missing cells replaced by per-column constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedCovariates {
    pub values: Matrix,
    pub constants: Vec<f64>,
}

pub fn impute(data: &ExperimentData, c: &[f64]) -> Result<ImputedCovariates> {
    if c.len() != data.j() {
        return Err(Error::InvalidArgument(format!(
            "{} imputation constants for {} covariates",
            c.len(),
            data.j()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("imputation constants".into()));
    }
    let values = Matrix::from_fn(data.n(), data.j(), |i, j| data.covariate(i, j).unwrap_or(c[j]));
    Ok(ImputedCovariates {
        values,
        constants: c.to_vec(),
    })
}

/// Covariate-wise means of the observed cells.
pub fn observed_means(data: &ExperimentData) -> Result<Vec<f64>> {
    (0..data.j())
        .map(|j| {
            let obs: Vec<f64> = (0..data.n()).filter_map(|i| data.covariate(i, j)).collect();
            if obs.is_empty() {
                Err(Error::InvalidData(format!(
                    "covariate {} has no observed value",
                    data.names().covariates[j]
                )))
            } else {
                Ok(obs.iter().sum::<f64>() / obs.len() as f64)
            }
        })
        .collect()
}

fn indicator_label(data: &ExperimentData, j: usize) -> String {
    format!("M_{}", data.names().covariates[j])
}

fn indicator(data: &ExperimentData, j: usize) -> Vec<f64> {
    data.mask().col(j).iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
}

fn imputed_block(data: &ExperimentData, c: &[f64]) -> Result<FeatureBlock> {
    let imp = impute(data, c)?;
    Ok(FeatureBlock::new(imp.values, data.names().covariates.clone()))
}

/// Raw values of the complete covariates.
pub fn ccov_features(data: &ExperimentData) -> FeatureBlock {
    let set = complete_covariate_set(data);
    let mut block = FeatureBlock::empty(data.n());
    for &j in &set.indices {
        block.push(data.names().covariates[j].clone(), data.covariates().col(j));
    }
    block
}

pub fn imp_features(data: &ExperimentData, c: &[f64]) -> Result<FeatureBlock> {
    imputed_block(data, c)
}

/// Incomplete columns whose indicator is kept after removing exact duplicates.
pub fn distinct_indicator_columns(data: &ExperimentData) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..data.j() {
        let col = data.mask().col(j);
        if !col.iter().any(|&m| m) {
            continue;
        }
        if kept.iter().any(|&k| data.mask().col(k) == col) {
            continue;
        }
        kept.push(j);
    }
    kept
}

/// Imputed covariates augmented with missingness indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct MimFeatures {
    pub block: FeatureBlock,
    /// Covariate index behind every indicator column.
    pub indicator_columns: Vec<usize>,
}

pub fn mim_features(data: &ExperimentData, c: &[f64]) -> Result<MimFeatures> {
    let mut block = imputed_block(data, c)?;
    let cols = distinct_indicator_columns(data);
    for &j in &cols {
        block.push(indicator_label(data, j), &indicator(data, j));
    }
    Ok(MimFeatures {
        block,
        indicator_columns: cols,
    })
}

/// Realization of the pattern-interaction features `u^mp(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpFeatures {
    pub block: FeatureBlock,
    /// Indicator subsets (covariate indices) with a nonzero product, in column order.
    pub subsets: Vec<Vec<usize>>,
}

/// Nonempty subsets of incomplete columns whose indicator product is nonzero
/// for some unit, ordered by size and then lexicographically.
pub fn realized_indicator_subsets(data: &ExperimentData, cap: usize) -> Result<Vec<Vec<usize>>> {
    let incomplete: Vec<usize> = (0..data.j())
        .filter(|&j| data.mask().col(j).iter().any(|&m| m))
        .collect();
    if incomplete.len() > cap {
        return Err(Error::InvalidArgument(format!(
            "{} incomplete covariates exceed the pattern cap of {cap}",
            incomplete.len()
        )));
    }
    let table = pattern_table(data);
    let mut subsets: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
    for pattern in &table.patterns {
        let missing: Vec<usize> = (0..data.j()).filter(|&j| pattern[j]).collect();
        let k = missing.len();
        for bits in 1u64..(1u64 << k) {
            let s: Vec<usize> = (0..k).filter(|b| bits >> b & 1 == 1).map(|b| missing[b]).collect();
            subsets.insert((s.len(), s));
        }
    }
    Ok(subsets.into_iter().map(|(_, s)| s).collect())
}

fn subset_product(data: &ExperimentData, s: &[usize]) -> Vec<f64> {
    (0..data.n())
        .map(|i| if s.iter().all(|&j| data.mask().get(i, j)) { 1.0 } else { 0.0 })
        .collect()
}

fn subset_label(data: &ExperimentData, s: &[usize]) -> String {
    s.iter().map(|&j| indicator_label(data, j)).collect::<Vec<_>>().join("*")
}

/// Non-constant part of `(1, x^imp(c)) ⊗ f` with `f = ⊗_j (1, M_j)`.
///
/// Products that vanish for every unit are left out; they contribute nothing
/// to the column span.
pub fn mp_features(data: &ExperimentData, c: &[f64], cap: usize) -> Result<MpFeatures> {
    let mut block = imputed_block(data, c)?;
    let x = block.clone();
    let subsets = realized_indicator_subsets(data, cap)?;
    let products: Vec<Vec<f64>> = subsets.iter().map(|s| subset_product(data, s)).collect();
    for (s, p) in subsets.iter().zip(&products) {
        block.push(subset_label(data, s), p);
    }
    for (s, p) in subsets.iter().zip(&products) {
        for (k, xc) in x.matrix.columns().enumerate() {
            let v: Vec<f64> = xc.iter().zip(p).map(|(a, b)| a * b).collect();
            if v.iter().all(|&e| e == 0.0) {
                continue;
            }
            block.push(format!("{}*{}", x.labels[k], subset_label(data, s)), &v);
        }
    }
    Ok(MpFeatures { block, subsets })
}

/// Per-unit observed-entry counts `J_i` and complete-case indicators `C_i`.
pub fn count_and_cc_scalars(data: &ExperimentData) -> (Vec<f64>, Vec<f64>) {
    (0..data.n())
        .map(|i| {
            let observed = (0..data.j()).filter(|&j| !data.mask().get(i, j)).count();
            (observed as f64, if observed == data.j() { 1.0 } else { 0.0 })
        })
        .unzip()
}

/// `x^imp(c)` plus the observed-entry count.
pub fn mc_features(data: &ExperimentData, c: &[f64]) -> Result<FeatureBlock> {
    let mut block = imputed_block(data, c)?;
    block.push("n_observed", &count_and_cc_scalars(data).0);
    Ok(block)
}

/// `x^imp(c)` plus the complete-case indicator.
pub fn cim_features(data: &ExperimentData, c: &[f64]) -> Result<FeatureBlock> {
    let mut block = imputed_block(data, c)?;
    block.push("complete_case", &count_and_cc_scalars(data).1);
    Ok(block)
}

/// The mim block plus every pairwise product of its columns.
///
/// Products vanishing for all units are left out. Writing
/// `x^imp_j = x^0_j + c_j M_j` shows every product lies in the span built
/// from `c = 0`, so this block's span does not depend on `c`. The fit is
/// c-invariant whenever the design has full column rank.
pub fn second_order_features(data: &ExperimentData, c: &[f64]) -> Result<FeatureBlock> {
    let base = mim_features(data, c)?.block;
    let mut block = base.clone();
    let q = base.ncols();
    for a in 0..q {
        for b in a + 1..q {
            let v: Vec<f64> = base
                .matrix
                .col(a)
                .iter()
                .zip(base.matrix.col(b))
                .map(|(u, w)| u * w)
                .collect();
            if v.iter().all(|&e| e == 0.0) {
                continue;
            }
            block.push(format!("{}*{}", base.labels[a], base.labels[b]), &v);
        }
    }
    Ok(block)
}

/// Arm-wise missingness for one covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorBalance {
    pub column: usize,
    pub rate_control: f64,
    pub rate_treated: f64,
    pub difference: f64,
    pub z: f64,
}

/// Treatment balance of the missingness indicators and of complete-case status.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub indicators: Vec<IndicatorBalance>,
    pub cc_rate_control: f64,
    pub cc_rate_treated: f64,
    pub cc_difference: f64,
    pub cc_z: f64,
}

impl BalanceReport {
    pub fn max_abs_z(&self) -> f64 {
        self.indicators.iter().map(|b| b.z.abs()).fold(self.cc_z.abs(), f64::max)
    }
}

fn two_proportion(flags: &[bool], treatment: &[bool]) -> (f64, f64, f64, f64) {
    let (mut k1, mut n1, mut k0, mut n0) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (&f, &t) in flags.iter().zip(treatment) {
        let v = if f { 1.0 } else { 0.0 };
        if t {
            k1 += v;
            n1 += 1.0;
        } else {
            k0 += v;
            n0 += 1.0;
        }
    }
    let (p1, p0) = (k1 / n1, k0 / n0);
    let pooled = (k1 + k0) / (n1 + n0);
    let denom = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n0)).sqrt();
    let diff = p1 - p0;
    let z = if denom > 0.0 { diff / denom } else { 0.0 };
    (p0, p1, diff, z)
}

/// Pooled two-proportion z-statistics per covariate; `z = 0` when no variation exists.
pub fn balance_check(data: &ExperimentData) -> BalanceReport {
    let t = data.treatment();
    let indicators = (0..data.j())
        .map(|j| {
            let (rate_control, rate_treated, difference, z) = two_proportion(data.mask().col(j), t);
            IndicatorBalance {
                column: j,
                rate_control,
                rate_treated,
                difference,
                z,
            }
        })
        .collect();
    let cc: Vec<bool> = count_and_cc_scalars(data).1.iter().map(|&v| v == 1.0).collect();
    let (cc_rate_control, cc_rate_treated, cc_difference, cc_z) = two_proportion(&cc, t);
    BalanceReport {
        indicators,
        cc_rate_control,
        cc_rate_treated,
        cc_difference,
        cc_z,
    }
}

/// Imputation constants removing the first-order bias of single imputation
/// under treatment-dependent missingness.
///
/// With `A = 1 − M`, `c_j = (Âx_j(1) − Âx_j(0)) / (Â_j(1) − Â_j(0))` where
/// hats are arm means. Complete columns never use their constant and get 0.
pub fn debias_constants(data: &ExperimentData) -> Result<Vec<f64>> {
    let n1 = data.n_treated() as f64;
    let n0 = data.n_control() as f64;
    let mut out = Vec::with_capacity(data.j());
    let mut bad = Vec::new();
    for j in 0..data.j() {
        if !data.mask().col(j).iter().any(|&m| m) {
            out.push(0.0);
            continue;
        }
        let (mut ax1, mut ax0, mut a1, mut a0) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..data.n() {
            if let Some(x) = data.covariate(i, j) {
                if data.treatment()[i] {
                    ax1 += x;
                    a1 += 1.0;
                } else {
                    ax0 += x;
                    a0 += 1.0;
                }
            }
        }
        let den = a1 / n1 - a0 / n0;
        if den.abs() <= 1e-12 {
            bad.push(j);
            out.push(f64::NAN);
        } else {
            out.push((ax1 / n1 - ax0 / n0) / den);
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::ZeroDenominator { columns: bad })
    }
}
