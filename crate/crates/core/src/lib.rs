//! Design-based estimation of the average treatment effect in completely
//! randomized experiments whose covariates are only partially observed.
//!
//! The crate is layered bottom-up:
//!
//! * [`dataset`]: observed experimental data, CSV ingestion, missingness patterns.
//! * [`ols`]: rank-aware least squares with Eicker–Huber–White and cluster-robust
//!   sandwich covariances, plus the additive and fully interacted design builders.
//! * [`missingness`]: feature engineering for each missing-covariate strategy.
//! * [`estimators`]: the point estimators, robust standard errors, Wald inference and
//!   the studentized Fisher randomization test.
//! * [`simulation`]: finite-population generators, variance oracles and the
//!   Monte Carlo runner.
//! * [`extensions`]: cluster-randomized and stratified experiments.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod extensions;
pub mod matrix;
pub mod missingness;
pub mod ols;
pub mod rng;
pub mod simulation;

pub use dataset::{CompleteCovariateSet, CovariateColumns, ExperimentData, PatternTable, Schema};
pub use error::{Error, Result};
pub use estimators::{
    estimate, frt_studentized, wald, AnalysisLevel, Diagnostics, EstimateResult, EstimatorSpec,
    FrtResult, ImputePolicy, InferenceOptions, Model, MpFallback, Strategy,
};
pub use matrix::{Mask, Matrix};
pub use ols::{CovFlavor, DesignMatrix, OlsFit, SandwichCov};
pub use simulation::{McSummary, PotentialPopulation, Scenario};
