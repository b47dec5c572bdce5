//! Rank-aware ordinary least squares and sandwich covariances.
//!
//! Columns are orthogonalized left to right (modified Gram–Schmidt, two
//! passes). A column whose norm after projection on the previously kept
//! columns falls below `rel_tol` times its own norm is dropped and its
//! coefficient reported as absent. Column order in every builder is therefore
//! part of the contract: it decides which member of a collinear set survives.
//!
//! Covariances are computed from the thin factorization `X_kept = Q R` as
//! `R⁻¹ (Σ_g s_g s_gᵀ) R⁻ᵀ`, with `s_g` the summed scores `e_i q_i` of group
//! `g`. HC0 uses singleton groups; CR0 uses clusters.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::{dot, mean, norm, Matrix};

pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Provenance of a design column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ColumnLabel {
    Intercept,
    Treatment,
    /// A (possibly centered) feature, e.g. `x2`, `M3`, `x1*M2`, `n`.
    Feature(String),
    /// Treatment times a centered feature.
    TreatmentBy(String),
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnLabel::Intercept => write!(f, "(intercept)"),
            ColumnLabel::Treatment => write!(f, "Z"),
            ColumnLabel::Feature(s) => write!(f, "{s}"),
            ColumnLabel::TreatmentBy(s) => write!(f, "Z*{s}"),
        }
    }
}

/// Named feature columns handed to the design builders.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureBlock {
    pub matrix: Matrix,
    pub labels: Vec<String>,
}

impl FeatureBlock {
    pub fn empty(nrows: usize) -> Self {
        FeatureBlock {
            matrix: Matrix::with_rows(nrows),
            labels: Vec::new(),
        }
    }

    pub fn new(matrix: Matrix, labels: Vec<String>) -> Self {
        assert_eq!(matrix.ncols(), labels.len(), "label count mismatch");
        FeatureBlock { matrix, labels }
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn push(&mut self, label: impl Into<String>, column: &[f64]) {
        self.matrix.push_column(column);
        self.labels.push(label.into());
    }

    pub fn extend(&mut self, other: &FeatureBlock) {
        for (k, c) in other.matrix.columns().enumerate() {
            self.push(other.labels[k].clone(), c);
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureBlock {
        FeatureBlock {
            matrix: self.matrix.select_rows(rows),
            labels: self.labels.clone(),
        }
    }
}

/// Regression design with labeled columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    columns: Matrix,
    labels: Vec<ColumnLabel>,
    /// Means subtracted from the feature block, when centered.
    centering: Option<Vec<f64>>,
}

impl DesignMatrix {
    /// Checks the first column is an all-ones intercept and exactly one column is the treatment.
    pub fn from_parts(
        columns: Matrix,
        labels: Vec<ColumnLabel>,
        centering: Option<Vec<f64>>,
    ) -> Result<Self> {
        if labels.len() != columns.ncols() {
            return Err(Error::Internal("design label count mismatch".into()));
        }
        if labels.first() != Some(&ColumnLabel::Intercept) || columns.col(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Internal("design must start with an intercept".into()));
        }
        if labels.iter().filter(|l| **l == ColumnLabel::Treatment).count() != 1 {
            return Err(Error::Internal("design must contain exactly one treatment column".into()));
        }
        Ok(DesignMatrix {
            columns,
            labels,
            centering,
        })
    }

    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    pub fn labels(&self) -> &[ColumnLabel] {
        &self.labels
    }

    pub fn centering(&self) -> Option<&[f64]> {
        self.centering.as_deref()
    }

    pub fn nrows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }

    pub fn treatment_index(&self) -> usize {
        self.labels
            .iter()
            .position(|l| *l == ColumnLabel::Treatment)
            .expect("validated at construction")
    }
}

fn z_column(treatment: &[bool]) -> Vec<f64> {
    treatment.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
}

/// `(1, Z, features)`, uncentered.
pub fn build_additive(treatment: &[bool], features: &FeatureBlock) -> DesignMatrix {
    let n = treatment.len();
    assert_eq!(features.nrows(), n, "feature rows must align with units");
    let mut cols = Matrix::with_rows(n);
    cols.push_column(&vec![1.0; n]);
    cols.push_column(&z_column(treatment));
    let mut labels = vec![ColumnLabel::Intercept, ColumnLabel::Treatment];
    for (k, c) in features.matrix.columns().enumerate() {
        cols.push_column(c);
        labels.push(ColumnLabel::Feature(features.labels[k].clone()));
    }
    DesignMatrix {
        columns: cols,
        labels,
        centering: None,
    }
}

/// `(1, Z, f − f̄, Z·(f − f̄))` with features centered at their full-sample means.
pub fn build_interacted(treatment: &[bool], features: &FeatureBlock) -> DesignMatrix {
    let n = treatment.len();
    assert_eq!(features.nrows(), n, "feature rows must align with units");
    let z = z_column(treatment);
    let means: Vec<f64> = features.matrix.columns().map(mean).collect();
    let centered: Vec<Vec<f64>> = features
        .matrix
        .columns()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| v - m).collect())
        .collect();
    let mut cols = Matrix::with_rows(n);
    cols.push_column(&vec![1.0; n]);
    cols.push_column(&z);
    let mut labels = vec![ColumnLabel::Intercept, ColumnLabel::Treatment];
    for (k, c) in centered.iter().enumerate() {
        cols.push_column(c);
        labels.push(ColumnLabel::Feature(features.labels[k].clone()));
    }
    for (k, c) in centered.iter().enumerate() {
        let zc: Vec<f64> = c.iter().zip(&z).map(|(a, b)| a * b).collect();
        cols.push_column(&zc);
        labels.push(ColumnLabel::TreatmentBy(features.labels[k].clone()));
    }
    DesignMatrix {
        columns: cols,
        labels,
        centering: Some(means),
    }
}

/// Least-squares fit on the retained columns.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// One entry per design column; `None` for dropped columns.
    pub coefficients: Vec<Option<f64>>,
    /// Retained column indices, increasing.
    pub kept: Vec<usize>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    q: Matrix,
    r_inv: Matrix,
}

impl OlsFit {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|j| self.coefficients[*j].is_none())
            .collect()
    }

    /// Position of design column `column` among the kept columns.
    pub fn kept_position(&self, column: usize) -> Option<usize> {
        self.kept.iter().position(|&k| k == column)
    }
}

pub fn fit(x: &DesignMatrix, y: &[f64]) -> Result<OlsFit> {
    fit_matrix(&x.columns, y, DEFAULT_REL_TOL)
}

pub fn fit_with_tol(x: &DesignMatrix, y: &[f64], rel_tol: f64) -> Result<OlsFit> {
    fit_matrix(&x.columns, y, rel_tol)
}

/// Fits `y` on the columns of `x` with sequential pruning at `rel_tol`.
pub fn fit_matrix(x: &Matrix, y: &[f64], rel_tol: f64) -> Result<OlsFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Internal(format!("y has {} rows, X has {n}", y.len())));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("design matrix".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response".into()));
    }
    let p = x.ncols();
    let mut q = Matrix::with_rows(n);
    // Columns of R (upper part) for the kept columns.
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut v = vec![0.0; n];
    for j in 0..p {
        v.copy_from_slice(x.col(j));
        let norm0 = norm(&v);
        if norm0 == 0.0 {
            continue;
        }
        let k = kept.len();
        let mut coef = vec![0.0; k];
        for _ in 0..2 {
            for (l, c) in coef.iter_mut().enumerate() {
                let ql = q.col(l);
                let d = dot(ql, &v);
                for (vi, qi) in v.iter_mut().zip(ql) {
                    *vi -= d * qi;
                }
                *c += d;
            }
        }
        let nr = norm(&v);
        if nr <= rel_tol * norm0 {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= nr;
        }
        q.push_column(&v);
        coef.push(nr);
        r_cols.push(coef);
        kept.push(j);
    }
    let k = kept.len();
    if k == 0 {
        return Err(Error::DegenerateDesign);
    }
    // Project y twice so the residual is orthogonal to Q at working precision.
    let mut resid = y.to_vec();
    let mut qty = vec![0.0; k];
    for _ in 0..2 {
        for (l, c) in qty.iter_mut().enumerate() {
            let ql = q.col(l);
            let d = dot(ql, &resid);
            for (ri, qi) in resid.iter_mut().zip(ql) {
                *ri -= d * qi;
            }
            *c += d;
        }
    }
    let r_inv = upper_inverse(&r_cols)?;
    let mut beta_kept = vec![0.0; k];
    for (a, b) in beta_kept.iter_mut().enumerate() {
        *b = (a..k).map(|c| r_inv.get(a, c) * qty[c]).sum();
    }
    let mut coefficients = vec![None; p];
    for (pos, &j) in kept.iter().enumerate() {
        coefficients[j] = Some(beta_kept[pos]);
    }
    let fitted = y.iter().zip(&resid).map(|(a, b)| a - b).collect();
    Ok(OlsFit {
        coefficients,
        kept,
        residuals: resid,
        fitted,
        q,
        r_inv,
    })
}

fn upper_inverse(r_cols: &[Vec<f64>]) -> Result<Matrix> {
    let k = r_cols.len();
    let r = |a: usize, b: usize| if a <= b { r_cols[b][a] } else { 0.0 };
    let mut inv = Matrix::zeros(k, k);
    for c in 0..k {
        // Solve R x = e_c by back substitution.
        for a in (0..=c).rev() {
            let rhs = if a == c { 1.0 } else { 0.0 };
            let s: f64 = (a + 1..=c).map(|b| r(a, b) * inv.get(b, c)).sum();
            let d = r(a, a);
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Internal("singular triangular factor after pruning".into()));
            }
            inv.set(a, c, (rhs - s) / d);
        }
    }
    Ok(inv)
}

/// Sandwich flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovFlavor {
    /// `(XᵀX)⁻¹ Xᵀ diag(e²) X (XᵀX)⁻¹`.
    #[default]
    Hc0,
    /// HC0 × N/(N − p).
    Hc1,
    /// Score outer products summed within clusters.
    Cr0,
}

impl fmt::Display for CovFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovFlavor::Hc0 => "hc0",
            CovFlavor::Hc1 => "hc1",
            CovFlavor::Cr0 => "cr0",
        })
    }
}

impl std::str::FromStr for CovFlavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hc0" => Ok(CovFlavor::Hc0),
            "hc1" => Ok(CovFlavor::Hc1),
            "cr0" => Ok(CovFlavor::Cr0),
            _ => Err(Error::InvalidArgument(format!("unknown covariance flavor {s:?}"))),
        }
    }
}

/// Robust covariance over the kept columns of a fit.
#[derive(Debug, Clone)]
pub struct SandwichCov {
    pub matrix: Matrix,
    pub flavor: CovFlavor,
    /// Design column index of each row/column of `matrix`.
    pub kept: Vec<usize>,
}

impl SandwichCov {
    /// Variance of the coefficient of design column `column`, if kept.
    pub fn variance(&self, column: usize) -> Option<f64> {
        let pos = self.kept.iter().position(|&k| k == column)?;
        Some(self.matrix.get(pos, pos))
    }
}

pub fn robust_cov(fit: &OlsFit, flavor: CovFlavor, cluster_id: Option<&[i64]>) -> Result<SandwichCov> {
    let n = fit.n();
    let k = fit.rank();
    let q = &fit.q;
    let e = &fit.residuals;
    let mut meat = vec![0.0; k * k];
    let mut add_outer = |s: &[f64]| {
        for a in 0..k {
            let sa = s[a];
            if sa == 0.0 {
                continue;
            }
            for b in a..k {
                meat[a * k + b] += sa * s[b];
            }
        }
    };
    match flavor {
        CovFlavor::Hc0 | CovFlavor::Hc1 => {
            let mut s = vec![0.0; k];
            for i in 0..n {
                for (l, sl) in s.iter_mut().enumerate() {
                    *sl = e[i] * q.get(i, l);
                }
                add_outer(&s);
            }
        }
        CovFlavor::Cr0 => {
            let ids = cluster_id
                .ok_or_else(|| Error::InvalidArgument("CR0 covariance requires cluster ids".into()))?;
            if ids.len() != n {
                return Err(Error::InvalidArgument("cluster id length mismatch".into()));
            }
            let mut group: HashMap<i64, usize> = HashMap::new();
            let mut sums: Vec<Vec<f64>> = Vec::new();
            for i in 0..n {
                let next = sums.len();
                let g = *group.entry(ids[i]).or_insert(next);
                if g == sums.len() {
                    sums.push(vec![0.0; k]);
                }
                for (l, sl) in sums[g].iter_mut().enumerate() {
                    *sl += e[i] * q.get(i, l);
                }
            }
            for s in &sums {
                add_outer(s);
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            meat[a * k + b] = meat[b * k + a];
        }
    }
    // V = R⁻¹ M R⁻ᵀ; R⁻¹ is upper triangular.
    let ri = &fit.r_inv;
    let mut tmp = vec![0.0; k * k]; // R⁻¹ M
    for a in 0..k {
        for b in 0..k {
            tmp[a * k + b] = (a..k).map(|c| ri.get(a, c) * meat[c * k + b]).sum();
        }
    }
    let scale = match flavor {
        CovFlavor::Hc1 => {
            if n <= k {
                return Err(Error::InvalidArgument(format!(
                    "HC1 needs N > p (N={n}, p={k})"
                )));
            }
            n as f64 / (n - k) as f64
        }
        _ => 1.0,
    };
    let mut v = Matrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let s: f64 = (b..k).map(|c| tmp[a * k + c] * ri.get(b, c)).sum::<f64>() * scale;
            v.set(a, b, s);
            v.set(b, a, s);
        }
    }
    Ok(SandwichCov {
        matrix: v,
        flavor,
        kept: fit.kept.clone(),
    })
}

/// Coefficient of the treatment column with its robust standard error.
#[derive(Debug, Clone)]
pub struct TreatmentCoefficient {
    pub estimate: f64,
    pub se: f64,
    pub dropped: Vec<ColumnLabel>,
    pub fit: OlsFit,
}

pub fn treatment_effect(
    design: &DesignMatrix,
    y: &[f64],
    flavor: CovFlavor,
    cluster_id: Option<&[i64]>,
    rel_tol: f64,
) -> Result<TreatmentCoefficient> {
    let fit = fit_with_tol(design, y, rel_tol)?;
    let t = design.treatment_index();
    let estimate = fit.coefficients[t].ok_or_else(|| {
        Error::TreatmentDropped(format!("{} units, {} columns", design.nrows(), design.ncols()))
    })?;
    let cov = robust_cov(&fit, flavor, cluster_id)?;
    let var = cov
        .variance(t)
        .ok_or_else(|| Error::Internal("treatment variance missing".into()))?;
    let dropped = fit.dropped().into_iter().map(|j| design.labels()[j].clone()).collect();
    Ok(TreatmentCoefficient {
        estimate,
        se: var.max(0.0).sqrt(),
        dropped,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn features(cols: &[Vec<f64>]) -> FeatureBlock {
        let n = cols.first().map_or(0, |c| c.len());
        FeatureBlock::new(
            Matrix::from_columns(n, cols),
            (1..=cols.len()).map(|k| format!("x{k}")).collect(),
        )
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.7 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let m = Matrix::from_columns(6, &[vec![1.0; 6], x]);
        let f = fit_matrix(&m, &y, DEFAULT_REL_TOL).unwrap();
        assert!(f.coefficients[0].unwrap().abs() < 1e-12);
        assert!((f.coefficients[1].unwrap() - 2.0).abs() < 1e-12);
        assert!(f.residuals.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn duplicated_column_dropped() {
        let x = vec![0.3, -1.0, 2.0, 0.5, 1.5];
        let y = vec![1.0, 0.0, 3.0, 2.0, -1.0];
        let a = fit_matrix(&Matrix::from_columns(5, &[vec![1.0; 5], x.clone()]), &y, DEFAULT_REL_TOL).unwrap();
        let b = fit_matrix(&Matrix::from_columns(5, &[vec![1.0; 5], x.clone(), x]), &y, DEFAULT_REL_TOL).unwrap();
        assert_eq!(b.kept, vec![0, 1]);
        assert_eq!(b.coefficients[2], None);
        for i in 0..5 {
            assert!((a.residuals[i] - b.residuals[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn simple_regression_is_difference_in_means() {
        let z = [true, false, true, false, true, false, false];
        let y = [3.0, 1.0, 5.0, 2.0, 4.0, 0.0, 1.5];
        let d = build_additive(&z, &FeatureBlock::empty(7));
        let f = fit(&d, &y).unwrap();
        let m1 = (3.0 + 5.0 + 4.0) / 3.0;
        let m0 = (1.0 + 2.0 + 0.0 + 1.5) / 4.0;
        assert!((f.coefficients[1].unwrap() - (m1 - m0)).abs() < 1e-12);
    }

    #[test]
    fn zero_residuals_zero_covariance() {
        let z = [true, false, true, false];
        let y = [1.0, 0.0, 1.0, 0.0];
        let d = build_additive(&z, &FeatureBlock::empty(4));
        let f = fit(&d, &y).unwrap();
        let c = robust_cov(&f, CovFlavor::Hc0, None).unwrap();
        assert!(c.matrix.as_slice().iter().all(|v| v.abs() < 1e-24));
    }

    #[test]
    fn hc0_matches_per_arm_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(6..40);
            let mut z: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            z[0] = true;
            z[1] = false;
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
            let d = build_additive(&z, &FeatureBlock::empty(n));
            let tc = treatment_effect(&d, &y, CovFlavor::Hc0, None, DEFAULT_REL_TOL).unwrap();
            let mut closed = 0.0;
            for arm in [false, true] {
                let ys: Vec<f64> = (0..n).filter(|&i| z[i] == arm).map(|i| y[i]).collect();
                let m = mean(&ys);
                let s2 = ys.iter().map(|v| (v - m).powi(2)).sum::<f64>() / ys.len() as f64;
                closed += s2 / ys.len() as f64;
            }
            assert!((tc.se * tc.se - closed).abs() <= 1e-10 * closed.max(1e-300));
        }
    }

    #[test]
    fn singleton_clusters_match_hc0_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let z: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let d = build_interacted(&z, &features(&[x]));
        let f = fit(&d, &y).unwrap();
        let ids: Vec<i64> = (0..n as i64).map(|i| 1000 - i).collect();
        let a = robust_cov(&f, CovFlavor::Hc0, None).unwrap();
        let b = robust_cov(&f, CovFlavor::Cr0, Some(&ids)).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn hc1_scales_hc0() {
        let z = [true, false, true, false, true, false];
        let y = [1.0, 0.5, 2.0, -1.0, 0.3, 0.0];
        let f = fit(&build_additive(&z, &FeatureBlock::empty(6)), &y).unwrap();
        let a = robust_cov(&f, CovFlavor::Hc0, None).unwrap();
        let b = robust_cov(&f, CovFlavor::Hc1, None).unwrap();
        assert!((b.variance(1).unwrap() - a.variance(1).unwrap() * 6.0 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn cr0_requires_ids() {
        let z = [true, false, true, false];
        let f = fit(&build_additive(&z, &FeatureBlock::empty(4)), &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!(robust_cov(&f, CovFlavor::Cr0, None).is_err());
    }

    #[test]
    fn builder_shapes() {
        let z = [true, false, true, false];
        let d = build_additive(&z, &FeatureBlock::empty(4));
        assert_eq!(d.ncols(), 2);
        let fb = features(&[vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0, 0.0, 1.0]]);
        let d = build_additive(&z, &fb);
        assert_eq!(
            d.labels(),
            &[
                ColumnLabel::Intercept,
                ColumnLabel::Treatment,
                ColumnLabel::Feature("x1".into()),
                ColumnLabel::Feature("x2".into())
            ]
        );
        let d = build_interacted(&z, &fb);
        assert_eq!(d.ncols(), 6);
        for j in 2..4 {
            assert!(d.columns().col(j).iter().sum::<f64>().abs() < 1e-14);
        }
        assert_eq!(d.centering(), Some(&[2.5, 0.5][..]));
        assert_eq!(build_interacted(&z, &FeatureBlock::empty(4)).ncols(), 2);
    }

    #[test]
    fn constant_feature_retained_then_pruned() {
        let z = [true, false, true, false, true];
        let fb = features(&[vec![3.0; 5]]);
        let d = build_additive(&z, &fb);
        assert_eq!(d.ncols(), 3);
        let f = fit(&d, &[1.0, 2.0, 0.0, 1.0, 4.0]).unwrap();
        assert_eq!(f.coefficients[2], None);
    }

    #[test]
    fn degenerate_and_nan_errors() {
        let m = Matrix::from_columns(3, &[vec![0.0; 3]]);
        assert!(matches!(fit_matrix(&m, &[1.0, 2.0, 3.0], 1e-10), Err(Error::DegenerateDesign)));
        let m = Matrix::from_columns(3, &[vec![1.0; 3]]);
        assert!(matches!(fit_matrix(&m, &[1.0, f64::NAN, 3.0], 1e-10), Err(Error::NonFinite(_))));
    }
}
