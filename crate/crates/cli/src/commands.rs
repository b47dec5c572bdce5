//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use randadj::dataset::{load_csv, pattern_table, CovariateColumns, Schema};
use randadj::estimators::{
    estimate, frt_studentized, AnalysisLevel, EstimateResult, EstimatorSpec, Model, MpFallback, PatternMethod, Strategy,
};
use randadj::extensions::{stratified, StratifiedPlan};
use randadj::ols::CovFlavor;
use randadj::simulation::{gen_scenario, monte_carlo};
use randadj::{Error, ExperimentData, Result};

use crate::args::{AnalyzeArgs, ClusterLevel, CommonSpecArgs, CompareArgs, DataArgs, FrtArgs, SimulateArgs};
use crate::table::{f3, Table};

fn load(args: &DataArgs) -> Result<ExperimentData> {
    let covariates = if args.covariates.trim().eq_ignore_ascii_case("rest") {
        CovariateColumns::Rest
    } else {
        CovariateColumns::Named(
            args.covariates
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        )
    };
    let schema = Schema {
        outcome: args.outcome.clone(),
        treatment: args.treatment.clone(),
        covariates,
        cluster: args.cluster.clone(),
        stratum: args.stratum.clone(),
    };
    load_csv(&args.input, &schema)
}

fn build_spec(strategy: Strategy, model: Model, common: &CommonSpecArgs, data: Option<&DataArgs>) -> Result<EstimatorSpec> {
    if !(common.ci > 0.0 && common.ci < 1.0) {
        return Err(Error::InvalidArgument(format!("--ci must lie in (0, 1), got {}", common.ci)));
    }
    let has_cluster = data.is_some_and(|d| d.cluster.is_some());
    if common.cluster_level.is_some() && !has_cluster {
        return Err(Error::InvalidArgument("--cluster-level requires --cluster".into()));
    }
    let level = match (common.cluster_level, has_cluster) {
        (Some(ClusterLevel::Total), _) => AnalysisLevel::ClusterTotal,
        (Some(ClusterLevel::Unit), _) | (None, true) => AnalysisLevel::ClusterUnit,
        (None, false) => AnalysisLevel::Individual,
    };
    Ok(EstimatorSpec::new(strategy, model)
        .with_impute(common.impute.clone())
        .with_flavor(common.flavor)
        .with_fallback(common.mp_fallback)
        .with_level(level)
        .with_ci_level(common.ci))
}

fn run_estimate(data: &ExperimentData, spec: &EstimatorSpec) -> Result<EstimateResult> {
    if data.stratum_id().is_some() {
        stratified(data, &StratifiedPlan::from_data(data, spec.clone())?)
    } else {
        estimate(data, spec)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn flavor_name(spec: &EstimatorSpec) -> String {
    match spec.level {
        AnalysisLevel::ClusterUnit => CovFlavor::Cr0.to_string(),
        AnalysisLevel::ClusterTotal if spec.options.flavor == CovFlavor::Cr0 => CovFlavor::Hc0.to_string(),
        _ => spec.options.flavor.to_string(),
    }
}

fn print_diagnostics(data: &ExperimentData, r: &EstimateResult, out: &mut impl Write) -> Result<()> {
    let d = &r.diagnostics;
    if data.mask().any() {
        let table = pattern_table(data);
        writeln!(out, "\nmissingness patterns (1 = missing; columns {})", data.names().covariates.join(","))?;
        let mut t = Table::new(&["pattern", "units", "share", "control", "treated"]);
        for k in 0..table.len() {
            t.row(vec![
                table.label(k),
                table.counts[k].to_string(),
                f3(table.proportions[k]),
                table.arm_counts[k][0].to_string(),
                table.arm_counts[k][1].to_string(),
            ]);
        }
        t.write(out)?;
    }
    if let Some(b) = &d.balance {
        writeln!(out, "\nbalance of missingness across arms")?;
        let mut t = Table::new(&["covariate", "missing (control)", "missing (treated)", "difference", "z"]);
        for ib in &b.indicators {
            t.row(vec![
                data.names().covariates[ib.column].clone(),
                f3(ib.rate_control),
                f3(ib.rate_treated),
                f3(ib.difference),
                f3(ib.z),
            ]);
        }
        t.row(vec![
            "complete case".into(),
            f3(b.cc_rate_control),
            f3(b.cc_rate_treated),
            f3(b.cc_difference),
            f3(b.cc_z),
        ]);
        t.write(out)?;
    }
    if !d.patterns.is_empty() {
        writeln!(out, "\npattern-wise fits")?;
        let mut t = Table::new(&["pattern", "weight", "estimate", "s.e.", "method"]);
        for p in &d.patterns {
            let method = match p.method {
                PatternMethod::Regression => "regression",
                PatternMethod::Neyman => "difference in means",
            };
            t.row(vec![p.pattern.clone(), f3(p.weight), f3(p.estimate), f3(p.se), method.into()]);
        }
        t.write(out)?;
    }
    if let Some(c) = &d.constants {
        if !c.is_empty() {
            let s: Vec<String> = c.iter().map(|v| format!("{v:.3}")).collect();
            writeln!(out, "\nimputation constants: {}", s.join(", "))?;
        }
    }
    if !d.dropped_columns.is_empty() {
        writeln!(out, "dropped collinear columns: {}", d.dropped_columns.join(", "))?;
    }
    for f in &d.fallbacks {
        writeln!(out, "fallback: {f}")?;
    }
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs, out: &mut impl Write) -> Result<()> {
    let spec = build_spec(args.spec.strategy, args.spec.model, &args.spec.common, Some(&args.data))?;
    let data = load(&args.data)?;
    let r = run_estimate(&data, &spec)?;
    let ci_label = format!("{}% CI", (spec.options.ci_level * 1000.0).round() / 10.0);
    writeln!(out, "estimator  {}", spec.label())?;
    writeln!(out, "units      {} (control {}, treated {})", data.n(), data.n_control(), data.n_treated())?;
    writeln!(out, "estimate   {}", f3(r.estimate))?;
    writeln!(out, "s.e.       {} ({})", f3(r.se), flavor_name(&spec))?;
    writeln!(out, "{ci_label:<10} [{}, {}]", f3(r.ci.0), f3(r.ci.1))?;
    writeln!(out, "p-value    {}", f3(r.p_value))?;
    let frt = match args.frt_draws {
        Some(draws) => {
            let f = frt_studentized(&data, &spec, draws, args.seed)?;
            writeln!(out, "randomization p-value {} ({} of {} draws valid)", f3(f.p_value), f.valid_draws, f.draws)?;
            Some(f.p_value)
        }
        None => None,
    };
    print_diagnostics(&data, &r, out)?;
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        writeln!(w, "estimator,n,estimate,se,ci_lo,ci_hi,p_value,frt_p_value")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            spec.label(),
            data.n(),
            r.estimate,
            r.se,
            r.ci.0,
            r.ci.1,
            r.p_value,
            frt.map_or(String::new(), |p| p.to_string())
        )?;
        w.flush()?;
    }
    Ok(())
}

pub fn frt(args: &FrtArgs, out: &mut impl Write) -> Result<()> {
    let spec = build_spec(args.spec.strategy, args.spec.model, &args.spec.common, Some(&args.data))?;
    let data = load(&args.data)?;
    let f = frt_studentized(&data, &spec, args.frt_draws, args.seed)?;
    writeln!(out, "estimator    {}", spec.label())?;
    writeln!(out, "t observed   {}", f3(f.t_obs))?;
    writeln!(out, "p-value      {}", f3(f.p_value))?;
    writeln!(out, "draws        {} ({} valid, {} dropped)", f.draws, f.valid_draws, f.dropped_draws)?;
    Ok(())
}

const COMPARE_ROWS: [Strategy; 5] = [Strategy::Cc, Strategy::Ccov, Strategy::Imp, Strategy::Mim, Strategy::Mp];

pub fn compare(args: &CompareArgs, out: &mut impl Write) -> Result<()> {
    let models = [Model::F, Model::L];
    let mut specs = Vec::new();
    for s in COMPARE_ROWS {
        for m in models {
            let mut spec = build_spec(s, m, &args.common, Some(&args.data))?;
            if s == Strategy::Mp {
                // Only report the pattern method where every pattern supports its own fit.
                spec = spec.with_fallback(MpFallback::Error);
            }
            specs.push(spec);
        }
    }
    let neyman_spec = build_spec(Strategy::Neyman, Model::F, &args.common, Some(&args.data))?;
    let data = load(&args.data)?;
    let neyman = run_estimate(&data, &neyman_spec)?;
    let results: Vec<Result<EstimateResult>> = specs.iter().map(|s| run_estimate(&data, s)).collect();
    if let Some(pos) = results.iter().position(|r| matches!(r, Err(e) if !e.is_infeasible())) {
        return results.into_iter().nth(pos).map_or(Ok(()), |r| r.map(|_| ()));
    }
    let mut notes = Vec::new();
    let mut t = Table::new(&["", "F estimate", "F s.e.", "F p-value", "L estimate", "L s.e.", "L p-value"]);
    let mut csv_rows = Vec::new();
    for (k, s) in COMPARE_ROWS.iter().enumerate() {
        let pair = &results[2 * k..2 * k + 2];
        if *s == Strategy::Mp && pair.iter().any(|r| matches!(r, Err(e) if e.is_infeasible())) {
            let reason = pair.iter().find_map(|r| r.as_ref().err()).map(ToString::to_string).unwrap_or_default();
            notes.push(format!("The missingness-pattern method is excluded: {reason}."));
            continue;
        }
        let mut cells = vec![s.name().to_string()];
        for (m, r) in models.iter().zip(pair) {
            match r {
                Ok(r) => {
                    cells.extend([f3(r.estimate), f3(r.se), f3(r.p_value)]);
                    csv_rows.push(format!("{},{m},{},{},{}", s.name(), r.estimate, r.se, r.p_value));
                }
                Err(e) => {
                    cells.extend(["n/a".to_string(), "n/a".into(), "n/a".into()]);
                    notes.push(format!("{}/{m} could not be computed: {e}.", s.name()));
                }
            }
        }
        t.row(cells);
    }
    writeln!(out, "robust s.e.: {}", flavor_name(&specs[0]))?;
    t.write(out)?;
    writeln!(
        out,
        "Difference in means for comparison: {} (s.e. {}), p-value {}.",
        f3(neyman.estimate),
        f3(neyman.se),
        f3(neyman.p_value)
    )?;
    for n in &notes {
        writeln!(out, "{n}")?;
    }
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        writeln!(w, "strategy,model,estimate,se,p_value")?;
        for r in &csv_rows {
            writeln!(w, "{r}")?;
        }
        writeln!(w, "neyman,-,{},{},{}", neyman.estimate, neyman.se, neyman.p_value)?;
        w.flush()?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
}

pub fn simulate(args: &SimulateArgs, out: &mut impl Write) -> Result<()> {
    let strategies: Vec<Strategy> = parse_list(&args.strategies)?;
    let models: Vec<Model> = parse_list(&args.models)?;
    if args.common.cluster_level.is_some() {
        return Err(Error::InvalidArgument("built-in scenarios are not cluster randomized".into()));
    }
    let mut specs = vec![build_spec(Strategy::Neyman, Model::F, &args.common, None)?];
    for &s in strategies.iter().filter(|&&s| s != Strategy::Neyman) {
        for &m in &models {
            specs.push(build_spec(s, m, &args.common, None)?);
        }
    }
    let n = args.n.unwrap_or(args.scenario.default_n());
    if args.reps < 2 {
        return Err(Error::InvalidArgument(format!("--reps must be at least 2, got {}", args.reps)));
    }
    let pop = gen_scenario(args.scenario, n, args.seed)?;
    let s = monte_carlo(&pop, &specs, args.reps, args.seed)?;
    writeln!(
        out,
        "scenario {}, N = {}, {} replications, tau = {}, MC-SE from {} batches",
        args.scenario,
        n,
        s.reps,
        f3(s.tau),
        s.batches
    )?;
    let mut t = Table::new(&["estimator", "bias", "(mcse)", "sd", "(mcse)", "rmse", "mean s.e.", "coverage", "(mcse)", "failures"]);
    for e in &s.estimators {
        t.row(vec![
            e.label.clone(),
            f3(e.bias.value),
            f3(e.bias.mc_se),
            f3(e.sd.value),
            f3(e.sd.mc_se),
            f3(e.rmse.value),
            f3(e.mean_se.value),
            f3(e.coverage.value),
            f3(e.coverage.mc_se),
            e.failures.to_string(),
        ]);
    }
    t.write(out)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let mut w = create(&dir.join("summary.csv"))?;
        s.write_summary_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("replicates.csv"))?;
        s.write_replicates_csv(&mut w)?;
        w.flush()?;
        writeln!(out, "wrote {} and {}", dir.join("summary.csv").display(), dir.join("replicates.csv").display())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_parse() {
        let s: Vec<Strategy> = parse_list("cc, mim,mp").unwrap();
        assert_eq!(s, vec![Strategy::Cc, Strategy::Mim, Strategy::Mp]);
        assert!(parse_list::<Model>("F,Q").is_err());
    }
}
