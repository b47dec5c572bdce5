//! Point estimators with robust standard errors and Wald inference.
//!
//! Every strategy reduces to one or more least-squares fits whose treatment
//! coefficient is the estimate. [`estimate`] dispatches on
//! [`EstimatorSpec::strategy`] and [`EstimatorSpec::level`].

mod inference;
mod pattern;

use std::fmt;
use std::str::FromStr;

use crate::dataset::ExperimentData;
use crate::error::{Error, Result};
use crate::missingness::{
    self, balance_check, ccov_features, cim_features, debias_constants, imp_features, mc_features,
    mim_features, observed_means, second_order_features, BalanceReport, DEFAULT_PATTERN_CAP,
};
use crate::ols::{
    build_additive, build_interacted, treatment_effect, CovFlavor, DesignMatrix, FeatureBlock,
    DEFAULT_REL_TOL,
};

pub use inference::{frt_studentized, wald, FrtResult};
pub use pattern::{mp_additive_design, mp_interacted_design};

/// Missing-covariate strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Difference in means.
    Neyman,
    /// Complete cases only.
    Cc,
    /// Completely observed covariates only.
    Ccov,
    /// Single imputation.
    Imp,
    /// Imputation plus missingness indicators.
    Mim,
    /// Pattern-wise fits combined with pattern-share weights.
    Mp,
    /// One regression on the pattern-interaction features.
    MpAggregate,
    /// Imputation plus the count of observed entries.
    Mc,
    /// Imputation plus the complete-case indicator.
    Cim,
    /// Indicator method with all pairwise interactions.
    Mim2,
}

impl Strategy {
    pub const ALL: [Strategy; 10] = [
        Strategy::Neyman,
        Strategy::Cc,
        Strategy::Ccov,
        Strategy::Imp,
        Strategy::Mim,
        Strategy::Mp,
        Strategy::MpAggregate,
        Strategy::Mc,
        Strategy::Cim,
        Strategy::Mim2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Neyman => "neyman",
            Strategy::Cc => "cc",
            Strategy::Ccov => "ccov",
            Strategy::Imp => "imp",
            Strategy::Mim => "mim",
            Strategy::Mp => "mp",
            Strategy::MpAggregate => "mp_aggregate",
            Strategy::Mc => "mc",
            Strategy::Cim => "cim",
            Strategy::Mim2 => "mim2",
        }
    }

    /// Whether the estimate depends on the imputation constants.
    pub fn uses_constants(self) -> bool {
        matches!(self, Strategy::Imp | Strategy::Mc | Strategy::Cim)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

/// Regression form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Model {
    /// Additive: `Y ~ 1 + Z + x`.
    F,
    /// Fully interacted with centered covariates.
    #[default]
    L,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::F => "F",
            Model::L => "L",
        })
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f" | "fisher" | "additive" => Ok(Model::F),
            "l" | "lin" | "interacted" => Ok(Model::L),
            _ => Err(Error::InvalidArgument(format!("unknown model {s:?} (expected F or L)"))),
        }
    }
}

/// How imputation constants are chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ImputePolicy {
    #[default]
    Zeros,
    ObservedMeans,
    /// Constants removing single-imputation bias under treatment-dependent missingness.
    Debias,
    Values(Vec<f64>),
}

impl ImputePolicy {
    pub fn resolve(&self, data: &ExperimentData) -> Result<Vec<f64>> {
        match self {
            ImputePolicy::Zeros => Ok(vec![0.0; data.j()]),
            ImputePolicy::ObservedMeans => observed_means(data),
            ImputePolicy::Debias => debias_constants(data),
            ImputePolicy::Values(v) => {
                if v.len() != data.j() {
                    return Err(Error::InvalidArgument(format!(
                        "{} imputation constants for {} covariates",
                        v.len(),
                        data.j()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

impl FromStr for ImputePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zeros" | "zero" | "0" => Ok(ImputePolicy::Zeros),
            "means" | "mean" => Ok(ImputePolicy::ObservedMeans),
            "debias" => Ok(ImputePolicy::Debias),
            _ => s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::InvalidArgument(format!("bad imputation constant {t:?}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(ImputePolicy::Values),
        }
    }
}

/// Behaviour of the pattern-wise estimator when a pattern is too small.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MpFallback {
    Error,
    /// Use the within-pattern difference in means for the offending pattern.
    #[default]
    NeymanWithinPattern,
    /// Replace the whole estimate with the indicator method.
    FallbackToMim,
}

impl FromStr for MpFallback {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "error" => Ok(MpFallback::Error),
            "neyman" | "neyman_within_pattern" => Ok(MpFallback::NeymanWithinPattern),
            "mim" | "fallback_to_mim" => Ok(MpFallback::FallbackToMim),
            _ => Err(Error::InvalidArgument(format!("unknown mp fallback {s:?}"))),
        }
    }
}

/// Unit of analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnalysisLevel {
    #[default]
    Individual,
    /// Individual-level regression with cluster-robust covariance.
    ClusterUnit,
    /// Regression of scaled cluster totals.
    ClusterTotal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceOptions {
    pub flavor: CovFlavor,
    pub rel_tol: f64,
    pub ci_level: f64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            flavor: CovFlavor::Hc0,
            rel_tol: DEFAULT_REL_TOL,
            ci_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub strategy: Strategy,
    pub model: Model,
    pub impute: ImputePolicy,
    pub options: InferenceOptions,
    pub mp_fallback: MpFallback,
    pub pattern_cap: usize,
    pub level: AnalysisLevel,
}

impl EstimatorSpec {
    pub fn new(strategy: Strategy, model: Model) -> Self {
        EstimatorSpec {
            strategy,
            model,
            impute: ImputePolicy::Zeros,
            options: InferenceOptions::default(),
            mp_fallback: MpFallback::default(),
            pattern_cap: DEFAULT_PATTERN_CAP,
            level: AnalysisLevel::Individual,
        }
    }

    pub fn neyman() -> Self {
        Self::new(Strategy::Neyman, Model::F)
    }

    pub fn with_impute(mut self, impute: ImputePolicy) -> Self {
        self.impute = impute;
        self
    }

    pub fn with_flavor(mut self, flavor: CovFlavor) -> Self {
        self.options.flavor = flavor;
        self
    }

    pub fn with_fallback(mut self, fallback: MpFallback) -> Self {
        self.mp_fallback = fallback;
        self
    }

    pub fn with_level(mut self, level: AnalysisLevel) -> Self {
        self.level = level;
        self
    }

    pub fn with_ci_level(mut self, level: f64) -> Self {
        self.options.ci_level = level;
        self
    }

    /// Short label such as `mim/L`; `neyman` carries no model.
    pub fn label(&self) -> String {
        match self.strategy {
            Strategy::Neyman => "neyman".into(),
            s => format!("{s}/{}", self.model),
        }
    }
}

/// How one pattern entered the pattern-wise estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternMethod {
    Regression,
    /// Within-pattern difference in means.
    Neyman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternFit {
    pub pattern: String,
    pub size: usize,
    pub n_control: usize,
    pub n_treated: usize,
    pub weight: f64,
    pub estimate: f64,
    pub se: f64,
    pub method: PatternMethod,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub label: String,
    /// Units entering the fit.
    pub n_used: usize,
    pub dropped_columns: Vec<String>,
    pub patterns: Vec<PatternFit>,
    pub fallbacks: Vec<String>,
    pub balance: Option<BalanceReport>,
    /// Imputation constants actually used.
    pub constants: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub p_value: f64,
    pub diagnostics: Diagnostics,
}

/// Estimate and SE before Wald inference is attached.
#[derive(Debug, Clone)]
pub(crate) struct RawEstimate {
    pub estimate: f64,
    pub se: f64,
    pub diagnostics: Diagnostics,
}

impl RawEstimate {
    pub(crate) fn finish(self, level: f64) -> Result<EstimateResult> {
        let (lo, hi, p) = wald(self.estimate, self.se, level)?;
        Ok(EstimateResult {
            estimate: self.estimate,
            se: self.se,
            ci: (lo, hi),
            p_value: p,
            diagnostics: self.diagnostics,
        })
    }
}

pub(crate) fn model_design(model: Model, treatment: &[bool], block: &FeatureBlock) -> DesignMatrix {
    match model {
        Model::F => build_additive(treatment, block),
        Model::L => build_interacted(treatment, block),
    }
}

/// Treatment coefficient of one design with the requested covariance flavor.
pub(crate) fn regress(
    design: &DesignMatrix,
    y: &[f64],
    options: &InferenceOptions,
    clusters: Option<&[i64]>,
) -> Result<RawEstimate> {
    let tc = treatment_effect(design, y, options.flavor, clusters, options.rel_tol)?;
    Ok(RawEstimate {
        estimate: tc.estimate,
        se: tc.se,
        diagnostics: Diagnostics {
            n_used: design.nrows(),
            dropped_columns: tc.dropped.iter().map(ToString::to_string).collect(),
            ..Default::default()
        },
    })
}

/// Feature block of a single-regression strategy; `None` for strategies without one.
pub(crate) fn strategy_block(
    data: &ExperimentData,
    strategy: Strategy,
    c: &[f64],
    cap: usize,
) -> Result<Option<FeatureBlock>> {
    Ok(Some(match strategy {
        Strategy::Neyman => FeatureBlock::empty(data.n()),
        Strategy::Ccov => ccov_features(data),
        Strategy::Imp => imp_features(data, c)?,
        Strategy::Mim => mim_features(data, c)?.block,
        Strategy::Mc => mc_features(data, c)?,
        Strategy::Cim => cim_features(data, c)?,
        Strategy::Mim2 => second_order_features(data, c)?,
        Strategy::MpAggregate => missingness::mp_features(data, c, cap)?.block,
        Strategy::Cc | Strategy::Mp => return Ok(None),
    }))
}

/// Whether the resolved constants matter to `strategy`.
fn needs_constants(strategy: Strategy) -> bool {
    !matches!(strategy, Strategy::Neyman | Strategy::Cc | Strategy::Ccov)
}

fn individual_clusters<'a>(data: &'a ExperimentData, options: &InferenceOptions) -> Result<Option<&'a [i64]>> {
    if options.flavor == CovFlavor::Cr0 {
        data.cluster_id()
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument("CR0 covariance requires cluster labels".into()))
    } else {
        Ok(None)
    }
}

/// Individual-level estimate without Wald inference.
pub(crate) fn estimate_raw(data: &ExperimentData, spec: &EstimatorSpec) -> Result<RawEstimate> {
    let c = if needs_constants(spec.strategy) {
        Some(spec.impute.resolve(data)?)
    } else {
        None
    };
    let clusters = individual_clusters(data, &spec.options)?;
    let model = if spec.strategy == Strategy::Neyman { Model::F } else { spec.model };
    let mut raw = match spec.strategy {
        Strategy::Cc => {
            let rows = data.complete_cases();
            if rows.is_empty() {
                return Err(Error::EmptyArm("no complete cases".into()));
            }
            let sub = data
                .subset(&rows)
                .map_err(|_| Error::EmptyArm("complete cases lack one treatment arm".into()))?;
            let block = FeatureBlock::new(sub.covariates().clone(), sub.names().covariates.clone());
            let design = model_design(model, sub.treatment(), &block);
            let sub_clusters = individual_clusters(&sub, &spec.options)?;
            regress(&design, sub.outcome(), &spec.options, sub_clusters)?
        }
        Strategy::Mp => pattern::pattern_wise(data, spec, c.as_deref().unwrap_or(&[]))?,
        // The single regression is unidentified when a pattern is undersized.
        Strategy::MpAggregate if !pattern::thresholds_hold(data, model) => {
            let mut raw = pattern::pattern_wise(data, spec, c.as_deref().unwrap_or(&[]))?;
            raw.diagnostics
                .fallbacks
                .push("a pattern misses its size threshold; used the pattern-wise estimator".into());
            raw
        }
        Strategy::MpAggregate if model == Model::F => {
            let design = mp_additive_design(data, c.as_deref().unwrap_or(&[]), spec.pattern_cap)?;
            regress(&design, data.outcome(), &spec.options, clusters)?
        }
        s => {
            let ca = c.as_deref().unwrap_or(&[]);
            let block = strategy_block(data, s, ca, spec.pattern_cap)?
                .ok_or_else(|| Error::Internal(format!("no feature block for {s}")))?;
            let design = model_design(model, data.treatment(), &block);
            regress(&design, data.outcome(), &spec.options, clusters)?
        }
    };
    raw.diagnostics.label = spec.label();
    if raw.diagnostics.constants.is_none() {
        raw.diagnostics.constants = c;
    }
    if data.mask().any() {
        raw.diagnostics.balance = Some(balance_check(data));
    }
    Ok(raw)
}

/// Estimate, robust SE, Wald interval and p-value for `spec` on `data`.
pub fn estimate(data: &ExperimentData, spec: &EstimatorSpec) -> Result<EstimateResult> {
    let raw = match spec.level {
        AnalysisLevel::Individual => estimate_raw(data, spec)?,
        AnalysisLevel::ClusterUnit => crate::extensions::cluster_unit_raw(data, spec)?,
        AnalysisLevel::ClusterTotal => crate::extensions::cluster_total_raw(data, spec)?,
    };
    raw.finish(spec.options.ci_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{Mask, Matrix};

    #[test]
    fn neyman_small_example() {
        let d = ExperimentData::complete(vec![1.0, 3.0, 0.0, 2.0], vec![true, true, false, false], Matrix::with_rows(4))
            .unwrap();
        let r = estimate(&d, &EstimatorSpec::neyman()).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-14);
        // Per-arm variances with N_z divisors: 1 and 1, over arm sizes 2 and 2.
        assert!((r.se * r.se - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_outcome_zero_se() {
        let d = ExperimentData::complete(vec![2.0; 4], vec![true, false, true, false], Matrix::with_rows(4)).unwrap();
        let r = estimate(&d, &EstimatorSpec::neyman()).unwrap();
        assert!(r.estimate.abs() < 1e-14);
        assert!(r.se < 1e-14);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn parse_round_trips() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("nope".parse::<Strategy>().is_err());
        assert_eq!("l".parse::<Model>().unwrap(), Model::L);
        assert_eq!("3.5,0,1".parse::<ImputePolicy>().unwrap(), ImputePolicy::Values(vec![3.5, 0.0, 1.0]));
        assert_eq!("means".parse::<ImputePolicy>().unwrap(), ImputePolicy::ObservedMeans);
        assert!("1,x".parse::<ImputePolicy>().is_err());
        assert_eq!("mim".parse::<MpFallback>().unwrap(), MpFallback::FallbackToMim);
    }

    #[test]
    fn cc_without_complete_cases_errors() {
        let x = Matrix::from_columns(4, &[vec![1.0; 4]]);
        let mask = Mask::from_fn(4, 1, |_, _| true);
        let d = ExperimentData::new(vec![1.0, 2.0, 3.0, 4.0], vec![true, false, true, false], x, mask).unwrap();
        let e = estimate(&d, &EstimatorSpec::new(Strategy::Cc, Model::L)).unwrap_err();
        assert!(e.is_infeasible());
    }

    #[test]
    fn ccov_without_complete_covariates_is_neyman() {
        let x = Matrix::from_columns(6, &[vec![1.0, 2.0, 0.5, 3.0, 1.0, 2.0]]);
        let mask = Mask::from_fn(6, 1, |i, _| i == 2);
        let d = ExperimentData::new(vec![1.0, 2.0, 3.0, 4.0, 6.0, 1.0], vec![true, false, true, false, true, false], x, mask)
            .unwrap();
        let n = estimate(&d, &EstimatorSpec::neyman()).unwrap();
        for m in [Model::F, Model::L] {
            let r = estimate(&d, &EstimatorSpec::new(Strategy::Ccov, m)).unwrap();
            assert!((r.estimate - n.estimate).abs() < 1e-12);
            assert!((r.se - n.se).abs() < 1e-12);
        }
    }
}
