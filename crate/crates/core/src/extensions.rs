//! Cluster-randomized and stratified experiments.

use std::collections::BTreeMap;

use crate::dataset::ExperimentData;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_raw, model_design, regress, strategy_block, AnalysisLevel, Diagnostics, EstimateResult,
    EstimatorSpec, Model, MpFallback, PatternFit, PatternMethod, RawEstimate, Strategy,
};
use crate::ols::{CovFlavor, FeatureBlock};

/// Clusters in increasing label order with sizes and `n̄ = N / I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterView {
    pub ids: Vec<i64>,
    pub sizes: Vec<usize>,
    pub mean_size: f64,
    pub treatment: Vec<bool>,
    /// Cluster position of every unit.
    pub unit_cluster: Vec<usize>,
}

impl ClusterView {
    pub fn new(data: &ExperimentData) -> Result<Self> {
        let labels = data
            .cluster_id()
            .ok_or_else(|| Error::InvalidArgument("cluster analysis requires cluster labels".into()))?;
        let mut index: BTreeMap<i64, usize> = BTreeMap::new();
        for &g in labels {
            index.insert(g, 0);
        }
        for (k, v) in index.values_mut().enumerate() {
            *v = k;
        }
        let ids: Vec<i64> = index.keys().copied().collect();
        let mut sizes = vec![0usize; ids.len()];
        let mut treatment = vec![false; ids.len()];
        let unit_cluster: Vec<usize> = labels.iter().map(|g| index[g]).collect();
        for (i, &k) in unit_cluster.iter().enumerate() {
            sizes[k] += 1;
            treatment[k] = data.treatment()[i];
        }
        Ok(ClusterView {
            mean_size: data.n() as f64 / ids.len() as f64,
            ids,
            sizes,
            treatment,
            unit_cluster,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `n̄⁻¹ Σ_l v_il` for every cluster.
    pub fn scaled_totals(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (&k, v) in self.unit_cluster.iter().zip(values) {
            out[k] += v;
        }
        out.iter_mut().for_each(|t| *t /= self.mean_size);
        out
    }

    pub fn arm_counts(&self) -> [usize; 2] {
        let treated = self.treatment.iter().filter(|&&t| t).count();
        [self.len() - treated, treated]
    }
}

/// Individual-level regression of the strategy with cluster-robust covariance.
pub(crate) fn cluster_unit_raw(data: &ExperimentData, spec: &EstimatorSpec) -> Result<RawEstimate> {
    if data.cluster_id().is_none() {
        return Err(Error::InvalidArgument("cluster analysis requires cluster labels".into()));
    }
    let mut unit = spec.clone();
    unit.level = AnalysisLevel::Individual;
    unit.options.flavor = CovFlavor::Cr0;
    if unit.strategy == Strategy::Mp {
        unit.strategy = Strategy::MpAggregate;
    }
    estimate_raw(data, &unit)
}

/// Interacted or additive regression of scaled cluster totals on
/// `(n_i, scaled feature totals)`; the unadjusted form regresses on `Z` only.
pub(crate) fn cluster_total_raw(data: &ExperimentData, spec: &EstimatorSpec) -> Result<RawEstimate> {
    let view = ClusterView::new(data)?;
    let strategy = match spec.strategy {
        Strategy::Cc => {
            return Err(Error::InvalidArgument(
                "complete-case analysis is not defined on cluster totals".into(),
            ))
        }
        Strategy::Mp => Strategy::MpAggregate,
        s => s,
    };
    let c = if matches!(strategy, Strategy::Neyman | Strategy::Ccov) {
        vec![0.0; data.j()]
    } else {
        spec.impute.resolve(data)?
    };
    let mut block = FeatureBlock::empty(view.len());
    if strategy != Strategy::Neyman {
        let sizes: Vec<f64> = view.sizes.iter().map(|&s| s as f64).collect();
        block.push("n", &sizes);
        let unit = strategy_block(data, strategy, &c, spec.pattern_cap)?
            .ok_or_else(|| Error::Internal(format!("no feature block for {strategy}")))?;
        for (k, col) in unit.matrix.columns().enumerate() {
            block.push(format!("total({})", unit.labels[k]), &view.scaled_totals(col));
        }
    }
    let model = if strategy == Strategy::Neyman { Model::F } else { spec.model };
    let [i0, i1] = view.arm_counts();
    let dim = block.ncols();
    let enough = match model {
        Model::L => i0.min(i1) > dim,
        Model::F => i0 + i1 >= dim + 2 && i0.min(i1) >= 1,
    };
    if !enough {
        return Err(Error::InsufficientClusters(format!(
            "{i0} control and {i1} treated clusters for {dim} cluster-level covariates"
        )));
    }
    let y = view.scaled_totals(data.outcome());
    let design = model_design(model, &view.treatment, &block);
    let mut options = spec.options;
    if options.flavor == CovFlavor::Cr0 {
        options.flavor = CovFlavor::Hc0;
    }
    let mut raw = regress(&design, &y, &options, None)?;
    raw.diagnostics.label = format!("{}@cluster_total", spec.label());
    if strategy.uses_constants() || !matches!(strategy, Strategy::Neyman | Strategy::Ccov) {
        raw.diagnostics.constants = Some(c);
    }
    Ok(raw)
}

pub fn cluster_unit_level(data: &ExperimentData, spec: &EstimatorSpec) -> Result<EstimateResult> {
    cluster_unit_raw(data, spec)?.finish(spec.options.ci_level)
}

pub fn cluster_total_level(data: &ExperimentData, spec: &EstimatorSpec) -> Result<EstimateResult> {
    cluster_total_raw(data, spec)?.finish(spec.options.ci_level)
}

/// Per-stratum analysis combined with stratum weights.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedPlan {
    /// Stratum label of every unit.
    pub strata: Vec<i64>,
    pub spec: EstimatorSpec,
    /// `(label, weight)` pairs; unit shares when absent.
    pub weights: Option<Vec<(i64, f64)>>,
}

impl StratifiedPlan {
    pub fn from_data(data: &ExperimentData, spec: EstimatorSpec) -> Result<Self> {
        let strata = data
            .stratum_id()
            .ok_or_else(|| Error::InvalidArgument("stratified analysis requires stratum labels".into()))?
            .to_vec();
        Ok(StratifiedPlan {
            strata,
            spec,
            weights: None,
        })
    }
}

/// `Σ ω_k τ̂_k` with squared SE `Σ ω_k² ŝe_k²`.
///
/// When a stratum cannot support the requested estimator and the estimator's
/// fallback policy is not `Error`, that stratum uses its difference in means.
pub fn stratified(data: &ExperimentData, plan: &StratifiedPlan) -> Result<EstimateResult> {
    if plan.strata.len() != data.n() {
        return Err(Error::InvalidArgument("stratum labels do not match the data".into()));
    }
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &s) in plan.strata.iter().enumerate() {
        members.entry(s).or_default().push(i);
    }
    let n = data.n() as f64;
    let weights: BTreeMap<i64, f64> = match &plan.weights {
        None => members.iter().map(|(&k, m)| (k, m.len() as f64 / n)).collect(),
        Some(w) => {
            let map: BTreeMap<i64, f64> = w.iter().copied().collect();
            if map.len() != members.len() || members.keys().any(|k| !map.contains_key(k)) {
                return Err(Error::InvalidArgument("stratum weights must cover every stratum exactly once".into()));
            }
            if map.values().any(|v| !v.is_finite() || *v < 0.0) || (map.values().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument("stratum weights must be nonnegative and sum to 1".into()));
            }
            map
        }
    };
    let inner = &plan.spec;
    let mut diagnostics = Diagnostics {
        label: format!("{}@strata", plan.spec.label()),
        n_used: data.n(),
        ..Default::default()
    };
    let mut estimate = 0.0;
    let mut var = 0.0;
    for (label, rows) in &members {
        let sub = data
            .subset(rows)
            .map_err(|_| Error::EmptyArm(format!("stratum {label} lacks one treatment arm")))?;
        let (raw, method) = match stratum_raw(&sub, inner) {
            Ok(r) => (r, PatternMethod::Regression),
            Err(e) if e.is_infeasible() && plan.spec.mp_fallback != MpFallback::Error => {
                diagnostics
                    .fallbacks
                    .push(format!("stratum {label}: {e}; used the within-stratum difference in means"));
                (estimate_raw(&sub, &EstimatorSpec::neyman())?, PatternMethod::Neyman)
            }
            Err(e) => return Err(e),
        };
        let w = weights[label];
        estimate += w * raw.estimate;
        var += (w * raw.se).powi(2);
        diagnostics.fallbacks.extend(
            raw.diagnostics
                .fallbacks
                .iter()
                .map(|f| format!("stratum {label}: {f}")),
        );
        diagnostics.dropped_columns.extend(
            raw.diagnostics
                .dropped_columns
                .iter()
                .map(|c| format!("[stratum {label}] {c}")),
        );
        diagnostics.patterns.push(PatternFit {
            pattern: format!("stratum {label}"),
            size: sub.n(),
            n_control: sub.n_control(),
            n_treated: sub.n_treated(),
            weight: w,
            estimate: raw.estimate,
            se: raw.se,
            method,
        });
    }
    RawEstimate {
        estimate,
        se: var.sqrt(),
        diagnostics,
    }
    .finish(plan.spec.options.ci_level)
}

fn stratum_raw(data: &ExperimentData, spec: &EstimatorSpec) -> Result<RawEstimate> {
    match spec.level {
        AnalysisLevel::Individual => estimate_raw(data, spec),
        AnalysisLevel::ClusterUnit => cluster_unit_raw(data, spec),
        AnalysisLevel::ClusterTotal => cluster_total_raw(data, spec),
    }
}
