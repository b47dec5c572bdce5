//! Finite-population simulation: scenario generators, variance oracles and
//! the Monte Carlo runner.
//!
//! A [`PotentialPopulation`] is held fixed; only the assignment is random.
//! Replicate `r` draws its assignment from stream `r` of the master seed, and
//! results are collected in replicate order, so a summary depends on the seed
//! and the estimator list only, never on the number of worker threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::ExperimentData;
use crate::error::{Error, Result};
use crate::estimators::{estimate, strategy_block, EstimatorSpec, ImputePolicy, Model, Strategy};
use crate::matrix::{mean, variance, Mask, Matrix};
use crate::missingness::DEFAULT_PATTERN_CAP;
use crate::ols::{fit_matrix, DEFAULT_REL_TOL};
use crate::rng::{complete_randomization_with, permute, stream, Purpose};

/// How assignments are drawn for a population.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// Complete randomization of units with `n1` treated.
    Complete { n1: usize },
    /// Complete randomization of clusters with `treated_clusters` treated.
    Cluster { ids: Vec<i64>, treated_clusters: usize },
}

/// Fixed potential outcomes, covariates and potential missingness.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPopulation {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub covariates: Matrix,
    pub mask0: Mask,
    pub mask1: Mask,
    /// Auxiliary latent class, when the generator has one.
    pub latent: Option<Vec<f64>>,
    pub tau: f64,
    pub design: Design,
}

impl PotentialPopulation {
    pub fn new(
        y0: Vec<f64>,
        y1: Vec<f64>,
        covariates: Matrix,
        mask0: Mask,
        mask1: Mask,
        design: Design,
    ) -> Result<Self> {
        let n = y0.len();
        if y1.len() != n || covariates.nrows() != n || mask0.nrows() != n || mask1.nrows() != n {
            return Err(Error::InvalidData("population component lengths differ".into()));
        }
        if mask0.ncols() != covariates.ncols() || mask1.ncols() != covariates.ncols() {
            return Err(Error::InvalidData("mask width differs from covariates".into()));
        }
        match &design {
            Design::Complete { n1 } if *n1 == 0 || *n1 >= n => {
                return Err(Error::InvalidArgument(format!("need 0 < N1 < N, got N1={n1}")))
            }
            Design::Cluster { ids, treated_clusters } => {
                let distinct = distinct_in_order(ids).len();
                if ids.len() != n || *treated_clusters == 0 || *treated_clusters >= distinct {
                    return Err(Error::InvalidArgument("invalid cluster design".into()));
                }
            }
            _ => {}
        }
        let tau = mean(&y1) - mean(&y0);
        Ok(PotentialPopulation {
            y0,
            y1,
            covariates,
            mask0,
            mask1,
            latent: None,
            tau,
            design,
        })
    }

    pub fn n(&self) -> usize {
        self.y0.len()
    }

    pub fn j(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn tau_i(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }

    /// Whether missingness is unaffected by treatment.
    pub fn treatment_independent_missingness(&self) -> bool {
        self.mask0 == self.mask1
    }

    pub fn cluster_ids(&self) -> Option<&[i64]> {
        match &self.design {
            Design::Cluster { ids, .. } => Some(ids),
            Design::Complete { .. } => None,
        }
    }

    /// Treated share of units under the design (for clusters, of clusters).
    pub fn n_treated(&self) -> Option<usize> {
        match self.design {
            Design::Complete { n1 } => Some(n1),
            Design::Cluster { .. } => None,
        }
    }

    pub fn draw_assignment(&self, rng: &mut ChaCha8Rng) -> Vec<bool> {
        match &self.design {
            Design::Complete { n1 } => {
                complete_randomization_with(self.n(), *n1, rng).expect("validated at construction")
            }
            Design::Cluster { ids, treated_clusters } => {
                let clusters = distinct_in_order(ids);
                let mut labels = vec![false; clusters.len()];
                labels[..*treated_clusters].iter_mut().for_each(|v| *v = true);
                let labels = permute(&labels, rng);
                ids.iter()
                    .map(|id| labels[clusters.iter().position(|c| c == id).expect("known id")])
                    .collect()
            }
        }
    }

    /// Observed data under assignment `z`.
    pub fn observe(&self, z: &[bool]) -> Result<ExperimentData> {
        if z.len() != self.n() {
            return Err(Error::InvalidArgument("assignment length differs from population".into()));
        }
        let y = (0..self.n()).map(|i| if z[i] { self.y1[i] } else { self.y0[i] }).collect();
        let mask = Mask::from_fn(self.n(), self.j(), |i, j| {
            if z[i] {
                self.mask1.get(i, j)
            } else {
                self.mask0.get(i, j)
            }
        });
        let data = ExperimentData::new(y, z.to_vec(), self.covariates.clone(), mask)?;
        match self.cluster_ids() {
            Some(ids) => data.with_clusters(ids.to_vec()),
            None => Ok(data),
        }
    }
}

fn distinct_in_order(ids: &[i64]) -> Vec<i64> {
    let mut seen = std::collections::HashSet::new();
    ids.iter().copied().filter(|id| seen.insert(*id)).collect()
}

/// The three outcome models of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Outcomes linear in covariates with class-specific slopes.
    I,
    /// Adds a strong additive effect of the missingness indicators.
    II,
    /// Adds indicator interactions and an indicator-by-covariate term.
    III,
}

impl Scenario {
    /// Population size used by the original study.
    pub fn default_n(self) -> usize {
        match self {
            Scenario::I | Scenario::II => 500,
            Scenario::III => 10_000,
        }
    }

    fn index(self) -> u64 {
        match self {
            Scenario::I => 1,
            Scenario::II => 2,
            Scenario::III => 3,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::I => "i",
            Scenario::II => "ii",
            Scenario::III => "iii",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Scenario::I),
            "ii" | "2" => Ok(Scenario::II),
            "iii" | "3" => Ok(Scenario::III),
            _ => Err(Error::InvalidArgument(format!("unknown scenario {s:?}"))),
        }
    }
}

/// Treated count for a 20% treated share.
pub fn default_treated(n: usize) -> usize {
    ((0.2 * n as f64).round() as usize).clamp(1, n - 1)
}

const J: usize = 3;

struct Units {
    xi: Vec<f64>,
    x: Matrix,
    mask: Mask,
}

/// Latent class, covariates and treatment-independent missingness shared by all scenarios.
fn draw_units(n: usize, rng: &mut ChaCha8Rng, x_shift: f64) -> Units {
    let mut xi = Vec::with_capacity(n);
    let mut x = Matrix::zeros(n, J);
    let mut mask = Mask::new(n, J);
    for i in 0..n {
        let s = if rng.random_bool(0.2) { 1.0 } else { 0.0 };
        xi.push(s);
        for j in 0..J {
            let e: f64 = rng.sample(StandardNormal);
            x.set(i, j, s + x_shift + e);
        }
        let p = 0.1 * s + 0.05 * (1.0 - s);
        // Covariate 1 is always observed.
        for j in 1..J {
            mask.set(i, j, rng.random_bool(p));
        }
    }
    Units { xi, x, mask }
}

fn slope(z: bool, xi: f64) -> f64 {
    match (z, xi == 1.0) {
        (true, true) => 1.0,
        (false, true) => -1.0,
        (true, false) => 0.5,
        (false, false) => -0.5,
    }
}

fn center(v: &mut [f64]) {
    let m = mean(v);
    v.iter_mut().for_each(|e| *e -= m);
}

/// Population of size `n` for `which`, centered so that `tau = 0`, with 20% treated.
pub fn gen_scenario(which: Scenario, n: usize, seed: u64) -> Result<PotentialPopulation> {
    if n < 50 {
        return Err(Error::InvalidArgument(format!("scenario populations need N >= 50, got {n}")));
    }
    let mut rng = stream(seed, Purpose::Population, which.index());
    let u = draw_units(n, &mut rng, 0.0);
    let mut y = [vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let xi = u.xi[i];
        let xs: f64 = (0..J).map(|j| u.x.get(i, j)).sum();
        let m: Vec<f64> = (0..J).map(|j| if u.mask.get(i, j) { 1.0 } else { 0.0 }).collect();
        let msum: f64 = m.iter().sum();
        for (zi, arm) in y.iter_mut().enumerate() {
            let g = slope(zi == 1, xi);
            let mu = match which {
                Scenario::I => 5.0 * xi + 2.0 * g * xs,
                Scenario::II => 5.0 * xi + g * xs + 2.0 * msum,
                Scenario::III => 5.0 * xi + g * xs + msum + m[1] * m[2] + 5.0 * m[1] * xs,
            };
            let e: f64 = rng.sample(StandardNormal);
            arm[i] = mu + e;
        }
    }
    let [mut y0, mut y1] = y;
    center(&mut y0);
    center(&mut y1);
    let mut pop = PotentialPopulation::new(
        y0,
        y1,
        u.x,
        u.mask.clone(),
        u.mask,
        Design::Complete { n1: default_treated(n) },
    )?;
    pop.latent = Some(u.xi);
    Ok(pop)
}

/// Population whose missingness responds to treatment.
///
/// Covariates are shifted to mean one so zero imputation is informative.
/// Under treatment each of covariates 2 and 3 additionally goes missing with
/// probability `effect`; `effect = 0` gives identical potential masks. Half
/// the units are treated.
pub fn gen_treatment_dependent(n: usize, seed: u64, effect: f64) -> Result<PotentialPopulation> {
    if n < 50 {
        return Err(Error::InvalidArgument(format!("population needs N >= 50, got {n}")));
    }
    if !(0.0..=1.0).contains(&effect) {
        return Err(Error::InvalidArgument(format!("missingness effect {effect} not in [0, 1]")));
    }
    let mut rng = stream(seed, Purpose::Population, 4);
    let u = draw_units(n, &mut rng, 1.0);
    let mut mask1 = u.mask.clone();
    for i in 0..n {
        for j in 1..J {
            if rng.random_bool(effect) {
                mask1.set(i, j, true);
            }
        }
    }
    let mut y0 = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    for i in 0..n {
        let xi = u.xi[i];
        let xs: f64 = (0..J).map(|j| u.x.get(i, j)).sum();
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        y0[i] = 5.0 * xi + 2.0 * slope(false, xi) * xs + e0;
        y1[i] = 5.0 * xi + 2.0 * slope(true, xi) * xs + e1;
    }
    center(&mut y0);
    center(&mut y1);
    let mut pop = PotentialPopulation::new(y0, y1, u.x, u.mask, mask1, Design::Complete { n1: n / 2 })?;
    pop.latent = Some(u.xi);
    Ok(pop)
}

/// Cluster-randomized population with `clusters` clusters of varying size.
///
/// Sizes range over 2..=30 and the cluster effect grows with size, so cluster
/// size is prognostic. Half the clusters are treated.
pub fn gen_clustered(clusters: usize, seed: u64) -> Result<PotentialPopulation> {
    if clusters < 4 {
        return Err(Error::InvalidArgument("need at least 4 clusters".into()));
    }
    let mut rng = stream(seed, Purpose::Population, 5);
    let sizes: Vec<usize> = (0..clusters).map(|_| rng.random_range(2..=30)).collect();
    let n: usize = sizes.iter().sum();
    let u = draw_units(n, &mut rng, 0.0);
    let mut ids = Vec::with_capacity(n);
    let mut effect = Vec::with_capacity(n);
    for (g, &s) in sizes.iter().enumerate() {
        let shock: f64 = rng.sample(StandardNormal);
        let b = 0.3 * s as f64 + shock;
        for _ in 0..s {
            ids.push(g as i64);
            effect.push(b);
        }
    }
    let mut y0 = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    for i in 0..n {
        let xi = u.xi[i];
        let xs: f64 = (0..J).map(|j| u.x.get(i, j)).sum();
        let msum: f64 = (0..J).filter(|&j| u.mask.get(i, j)).count() as f64;
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        y0[i] = 5.0 * xi + slope(false, xi) * xs + 2.0 * msum + effect[i] + e0;
        y1[i] = 5.0 * xi + slope(true, xi) * xs + 2.0 * msum + 1.5 * effect[i] + e1;
    }
    center(&mut y0);
    center(&mut y1);
    let mut pop = PotentialPopulation::new(
        y0,
        y1,
        u.x,
        u.mask.clone(),
        u.mask,
        Design::Cluster {
            ids,
            treated_clusters: clusters / 2,
        },
    )?;
    pop.latent = Some(u.xi);
    Ok(pop)
}

/// Residuals of each column of `ys` regressed on `(1, W)` over the whole population.
fn population_projection(w: &Matrix, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let mut design = Matrix::with_rows(n);
    design.push_column(&vec![1.0; n]);
    for c in w.columns() {
        design.push_column(c);
    }
    let fit = fit_matrix(&design, y, DEFAULT_REL_TOL)?;
    let slopes = fit.coefficients[1..].iter().map(|b| b.unwrap_or(0.0)).collect();
    Ok((fit.residuals, slopes))
}

/// Asymptotic variance `v` of `√N (τ̂ − τ)` for a strategy on a population
/// with treatment-independent missingness.
///
/// `v = S²₀/e₀ + S²₁/e₁ − S²_τ` with finite-population variances of the
/// adjusted potential outcomes under the population projection coefficients.
/// Supported: neyman, ccov, imp, mim, mim2, mc, cim (F and L) and the pattern
/// strategies (L).
pub fn oracle_variance(
    pop: &PotentialPopulation,
    strategy: Strategy,
    model: Model,
    impute: &ImputePolicy,
) -> Result<f64> {
    if !pop.treatment_independent_missingness() {
        return Err(Error::InvalidArgument("oracle needs treatment-independent missingness".into()));
    }
    let n1 = pop
        .n_treated()
        .ok_or_else(|| Error::InvalidArgument("oracle needs a completely randomized design".into()))?;
    let n = pop.n();
    let e1 = n1 as f64 / n as f64;
    let e0 = 1.0 - e1;
    // Any assignment reveals the same covariates and mask under treatment-independent missingness.
    let mut z = vec![false; n];
    z[..n1].iter_mut().for_each(|v| *v = true);
    let data = pop.observe(&z)?;
    let block_strategy = match (strategy, model) {
        (Strategy::Cc, _) => {
            return Err(Error::InvalidArgument("no variance oracle for complete-case analysis".into()))
        }
        (Strategy::Mp | Strategy::MpAggregate, Model::F) => {
            return Err(Error::InvalidArgument("no variance oracle for the additive pattern method".into()))
        }
        (Strategy::Mp, Model::L) => Strategy::MpAggregate,
        (s, _) => s,
    };
    let c = impute.resolve(&data)?;
    let w = strategy_block(&data, block_strategy, &c, DEFAULT_PATTERN_CAP)?
        .ok_or_else(|| Error::Internal("strategy has no feature block".into()))?
        .matrix;
    let tau_i = pop.tau_i();
    let (s0, s1, st) = if strategy == Strategy::Neyman || w.ncols() == 0 {
        (variance(&pop.y0), variance(&pop.y1), variance(&tau_i))
    } else {
        let (r0, g0) = population_projection(&w, &pop.y0)?;
        let (r1, g1) = population_projection(&w, &pop.y1)?;
        match model {
            Model::L => {
                let d: Vec<f64> = r1.iter().zip(&r0).map(|(a, b)| a - b).collect();
                (variance(&r0), variance(&r1), variance(&d))
            }
            Model::F => {
                let gf: Vec<f64> = g0.iter().zip(&g1).map(|(a, b)| e0 * a + e1 * b).collect();
                let adjust = |y: &[f64]| -> Vec<f64> {
                    (0..n)
                        .map(|i| y[i] - (0..w.ncols()).map(|k| w.get(i, k) * gf[k]).sum::<f64>())
                        .collect()
                };
                (variance(&adjust(&pop.y0)), variance(&adjust(&pop.y1)), variance(&tau_i))
            }
        }
    };
    Ok(s0 / e0 + s1 / e1 - st)
}

/// Complete-case bias quantities of a population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcBias {
    pub tau_cc: f64,
    /// Effect among units with some covariate missing; NaN if every unit is complete.
    pub tau_ic: f64,
    /// `tau_cc − tau`.
    pub bias: f64,
    /// Finite-population covariance of the complete-case indicator and `τ_i`.
    pub s_c_tau: f64,
}

/// Limit of the complete-case bias under treatment-independent missingness.
pub fn oracle_cc_bias(pop: &PotentialPopulation) -> Result<CcBias> {
    let n = pop.n();
    let tau_i = pop.tau_i();
    let cc: Vec<bool> = (0..n).map(|i| (0..pop.j()).all(|j| !pop.mask0.get(i, j))).collect();
    let complete: Vec<f64> = (0..n).filter(|&i| cc[i]).map(|i| tau_i[i]).collect();
    if complete.is_empty() {
        return Err(Error::EmptyArm("population has no complete cases".into()));
    }
    let incomplete: Vec<f64> = (0..n).filter(|&i| !cc[i]).map(|i| tau_i[i]).collect();
    let tau = mean(&tau_i);
    let tau_cc = mean(&complete);
    let cbar = complete.len() as f64 / n as f64;
    let s_c_tau = (0..n)
        .map(|i| (if cc[i] { 1.0 } else { 0.0 } - cbar) * (tau_i[i] - tau))
        .sum::<f64>()
        / n as f64;
    Ok(CcBias {
        tau_cc,
        tau_ic: if incomplete.is_empty() { f64::NAN } else { mean(&incomplete) },
        bias: tau_cc - tau,
        s_c_tau,
    })
}

/// One replicate's output for one estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate {
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Replicate {
    pub fn covers(&self, tau: f64) -> bool {
        self.ci_lo <= tau && tau <= self.ci_hi
    }
}

/// A summary statistic with its batch-means Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McStat {
    pub value: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub spec: EstimatorSpec,
    pub label: String,
    /// Indexed by replicate; `None` where estimation failed.
    pub records: Vec<Option<Replicate>>,
    pub failures: usize,
    pub bias: McStat,
    pub sd: McStat,
    pub rmse: McStat,
    pub mean_se: McStat,
    pub coverage: McStat,
}

impl EstimatorSummary {
    pub fn estimates(&self) -> Vec<f64> {
        self.records.iter().flatten().map(|r| r.estimate).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub reps: usize,
    pub tau: f64,
    pub batches: usize,
    pub estimators: Vec<EstimatorSummary>,
}

/// Contiguous batch boundaries over `len` items.
fn batch_ranges(len: usize, batches: usize) -> Vec<std::ops::Range<usize>> {
    (0..batches)
        .map(|b| (b * len / batches)..((b + 1) * len / batches))
        .collect()
}

fn sd_pop(v: &[f64]) -> f64 {
    variance(v).max(0.0).sqrt()
}

fn batch_stat(values: &[f64], batches: usize, stat: impl Fn(&[f64]) -> f64) -> McStat {
    let value = stat(values);
    let per_batch: Vec<f64> = batch_ranges(values.len(), batches)
        .into_iter()
        .map(|r| stat(&values[r]))
        .collect();
    McStat {
        value,
        mc_se: sd_pop(&per_batch) / (batches as f64).sqrt(),
    }
}

pub const MAX_BATCHES: usize = 20;

impl McSummary {
    pub fn get(&self, label: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.label == label)
    }

    /// `SD(a) − SD(b)` with a paired batch-means standard error over replicates
    /// where both succeeded.
    pub fn sd_contrast(&self, a: &str, b: &str) -> Option<McStat> {
        let (ea, eb) = (self.get(a)?, self.get(b)?);
        let (va, vb): (Vec<f64>, Vec<f64>) = ea
            .records
            .iter()
            .zip(&eb.records)
            .filter_map(|(x, y)| Some((x.as_ref()?.estimate, y.as_ref()?.estimate)))
            .unzip();
        if va.len() < 2 {
            return None;
        }
        let batches = MAX_BATCHES.min(va.len() / 2).max(1);
        let diff = sd_pop(&va) - sd_pop(&vb);
        let per: Vec<f64> = batch_ranges(va.len(), batches)
            .into_iter()
            .map(|r| sd_pop(&va[r.clone()]) - sd_pop(&vb[r]))
            .collect();
        Some(McStat {
            value: diff,
            mc_se: sd_pop(&per) / (batches as f64).sqrt(),
        })
    }

    /// Summary table as CSV.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record([
            "estimator", "reps", "failures", "bias", "bias_mcse", "sd", "sd_mcse", "rmse", "rmse_mcse",
            "mean_se", "mean_se_mcse", "coverage", "coverage_mcse",
        ])
        .map_err(csv_err)?;
        for e in &self.estimators {
            let mut rec = vec![e.label.clone(), self.reps.to_string(), e.failures.to_string()];
            for s in [e.bias, e.sd, e.rmse, e.mean_se, e.coverage] {
                rec.push(s.value.to_string());
                rec.push(s.mc_se.to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Replicate-level dump with one row per replicate and estimator.
    pub fn write_replicates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["rep", "strategy", "model", "estimate", "se", "ci_lo", "ci_hi", "covered"])
            .map_err(csv_err)?;
        for e in &self.estimators {
            let model = if e.spec.strategy == Strategy::Neyman { String::new() } else { e.spec.model.to_string() };
            for (r, rec) in e.records.iter().enumerate() {
                let row = match rec {
                    Some(x) => vec![
                        r.to_string(),
                        e.spec.strategy.to_string(),
                        model.clone(),
                        x.estimate.to_string(),
                        x.se.to_string(),
                        x.ci_lo.to_string(),
                        x.ci_hi.to_string(),
                        (x.covers(self.tau) as u8).to_string(),
                    ],
                    None => vec![
                        r.to_string(),
                        e.spec.strategy.to_string(),
                        model.clone(),
                        "NA".into(),
                        "NA".into(),
                        "NA".into(),
                        "NA".into(),
                        "NA".into(),
                    ],
                };
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Monte Carlo over `reps` assignments on the global thread pool.
pub fn monte_carlo(pop: &PotentialPopulation, specs: &[EstimatorSpec], reps: usize, seed: u64) -> Result<McSummary> {
    run_monte_carlo(pop, specs, reps, seed)
}

/// As [`monte_carlo`], capped at `threads` workers. Output is identical for any cap.
pub fn monte_carlo_with_threads(
    pop: &PotentialPopulation,
    specs: &[EstimatorSpec],
    reps: usize,
    seed: u64,
    threads: usize,
) -> Result<McSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| run_monte_carlo(pop, specs, reps, seed))
}

type ReplicateRow = Vec<std::result::Result<Replicate, String>>;

fn run_monte_carlo(pop: &PotentialPopulation, specs: &[EstimatorSpec], reps: usize, seed: u64) -> Result<McSummary> {
    if reps < 2 {
        return Err(Error::InvalidArgument(format!("Monte Carlo needs reps >= 2, got {reps}")));
    }
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no estimators requested".into()));
    }
    let rows: Vec<Result<ReplicateRow>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Purpose::Assignment, r);
            let z = pop.draw_assignment(&mut rng);
            let data = pop.observe(&z)?;
            Ok(specs
                .iter()
                .map(|s| {
                    estimate(&data, s)
                        .map(|e| Replicate {
                            estimate: e.estimate,
                            se: e.se,
                            ci_lo: e.ci.0,
                            ci_hi: e.ci.1,
                        })
                        .map_err(|e| e.to_string())
                })
                .collect())
        })
        .collect();
    let rows: Vec<ReplicateRow> = rows.into_iter().collect::<Result<_>>()?;
    let tau = pop.tau;
    let mut estimators = Vec::with_capacity(specs.len());
    let mut batches_used = MAX_BATCHES.min(reps);
    for (k, spec) in specs.iter().enumerate() {
        let mut records = Vec::with_capacity(reps);
        let mut failures = 0;
        let mut last = String::new();
        for row in &rows {
            match &row[k] {
                Ok(r) => records.push(Some(*r)),
                Err(e) => {
                    failures += 1;
                    last = e.clone();
                    records.push(None);
                }
            }
        }
        if failures * 2 > reps {
            return Err(Error::TooManyFailures {
                estimator: spec.label(),
                failed: failures,
                total: reps,
                last,
            });
        }
        let ok: Vec<Replicate> = records.iter().flatten().copied().collect();
        let b = MAX_BATCHES.min(ok.len());
        batches_used = batches_used.min(b);
        let err: Vec<f64> = ok.iter().map(|r| r.estimate - tau).collect();
        let est: Vec<f64> = ok.iter().map(|r| r.estimate).collect();
        let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
        let ses: Vec<f64> = ok.iter().map(|r| r.se).collect();
        let cov: Vec<f64> = ok.iter().map(|r| if r.covers(tau) { 1.0 } else { 0.0 }).collect();
        let rmse_batches = batch_stat(&sq, b, |v| mean(v).sqrt());
        estimators.push(EstimatorSummary {
            spec: spec.clone(),
            label: spec.label(),
            records,
            failures,
            bias: batch_stat(&err, b, mean),
            sd: batch_stat(&est, b, sd_pop),
            rmse: rmse_batches,
            mean_se: batch_stat(&ses, b, mean),
            coverage: batch_stat(&cov, b, mean),
        });
    }
    Ok(McSummary {
        reps,
        tau,
        batches: batches_used,
        estimators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenarios_are_centered_and_structured() {
        for s in [Scenario::I, Scenario::II, Scenario::III] {
            let p = gen_scenario(s, 500, 1).unwrap();
            assert!(p.tau.abs() < 1e-12);
            assert_eq!(p.n_treated(), Some(100));
            assert!(p.treatment_independent_missingness());
            assert!((0..500).all(|i| !p.mask0.get(i, 0)));
            assert!(p.mask0.col(1).iter().any(|&m| m));
        }
        assert!(gen_scenario(Scenario::I, 10, 1).is_err());
    }

    #[test]
    fn scenario_is_seed_deterministic() {
        assert_eq!(gen_scenario(Scenario::II, 200, 5).unwrap(), gen_scenario(Scenario::II, 200, 5).unwrap());
        assert_ne!(gen_scenario(Scenario::II, 200, 5).unwrap(), gen_scenario(Scenario::II, 200, 6).unwrap());
    }

    #[test]
    fn zero_effect_keeps_masks_equal() {
        let p = gen_treatment_dependent(300, 2, 0.0).unwrap();
        assert!(p.treatment_independent_missingness());
        let p = gen_treatment_dependent(300, 2, 0.5).unwrap();
        assert!(!p.treatment_independent_missingness());
    }

    #[test]
    fn constant_effect_has_no_cc_bias() {
        let mut p = gen_scenario(Scenario::I, 200, 3).unwrap();
        p.y1 = p.y0.iter().map(|v| v + 2.0).collect();
        p.tau = 2.0;
        let b = oracle_cc_bias(&p).unwrap();
        assert!(b.bias.abs() < 1e-12 && b.s_c_tau.abs() < 1e-12);
    }

    #[test]
    fn cc_covariance_identity() {
        let p = gen_scenario(Scenario::I, 500, 4).unwrap();
        let b = oracle_cc_bias(&p).unwrap();
        let n = p.n() as f64;
        let cbar = (0..p.n()).filter(|&i| (0..3).all(|j| !p.mask0.get(i, j))).count() as f64 / n;
        assert!((b.s_c_tau - cbar * b.bias).abs() < 1e-12);
    }

    #[test]
    fn observe_reveals_arm_values() {
        let p = gen_treatment_dependent(100, 1, 0.5).unwrap();
        let z: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let d = p.observe(&z).unwrap();
        for i in 0..100 {
            assert_eq!(d.outcome()[i], if z[i] { p.y1[i] } else { p.y0[i] });
            for j in 0..3 {
                let m = if z[i] { p.mask1.get(i, j) } else { p.mask0.get(i, j) };
                assert_eq!(d.mask().get(i, j), m);
            }
        }
    }

    #[test]
    fn reps_below_two_rejected() {
        let p = gen_scenario(Scenario::I, 100, 1).unwrap();
        assert!(monte_carlo(&p, &[EstimatorSpec::neyman()], 1, 1).is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let p = gen_scenario(Scenario::II, 200, 9).unwrap();
        let specs = [EstimatorSpec::neyman(), EstimatorSpec::new(Strategy::Mim, Model::L)];
        let a = monte_carlo_with_threads(&p, &specs, 40, 11, 1).unwrap();
        let b = monte_carlo_with_threads(&p, &specs, 40, 11, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cluster_assignment_is_cluster_constant() {
        let p = gen_clustered(10, 3).unwrap();
        let mut rng = stream(1, Purpose::Assignment, 0);
        let z = p.draw_assignment(&mut rng);
        let ids = p.cluster_ids().unwrap();
        for i in 0..p.n() {
            for k in 0..p.n() {
                if ids[i] == ids[k] {
                    assert_eq!(z[i], z[k]);
                }
            }
        }
        assert_eq!(distinct_in_order(ids).iter().filter(|&&g| z[ids.iter().position(|&x| x == g).unwrap()]).count(), 5);
    }
}
