//! Deterministic checks against independent oracles.

mod common;

use common::*;
use randadj::estimators::{estimate, frt_studentized, EstimatorSpec, ImputePolicy, Model, Strategy};
use randadj::missingness::{balance_check, debias_constants, mim_features};
use randadj::ols::{build_additive, build_interacted, fit, robust_cov, CovFlavor};
use randadj::rng::{stream, Purpose, DEFAULT_SEED};
use randadj::simulation::{
    gen_scenario, gen_treatment_dependent, monte_carlo, monte_carlo_with_threads, oracle_variance, Scenario,
};
use randadj::Error;

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn ols_and_hc0_match_nalgebra() {
    for seed in 0..20 {
        let d = random_dataset(80, 3, 0.2, seed);
        let block = mim_features(&d, &[0.5, -1.0, 2.0]).unwrap().block;
        for design in [build_additive(d.treatment(), &block), build_interacted(d.treatment(), &block)] {
            let f = fit(&design, d.outcome()).unwrap();
            assert_eq!(f.rank(), design.ncols(), "random design should have full rank");
            let cols: Vec<Vec<f64>> = design.columns().columns().map(<[f64]>::to_vec).collect();
            let (beta, cov) = nalgebra_ols(&cols, d.outcome());
            let hc0 = robust_cov(&f, CovFlavor::Hc0, None).unwrap();
            for k in 0..design.ncols() {
                assert!(rel_diff(f.coefficients[k].unwrap(), beta[k]) < 1e-8);
                assert!(rel_diff(hc0.variance(k).unwrap(), cov[(k, k)]) < 1e-8);
            }
        }
    }
}

#[test]
fn cluster_sandwich_matches_direct_sum() {
    let d = random_dataset(60, 2, 0.0, 3);
    let ids: Vec<i64> = (0..60).map(|i| (i % 13) as i64).collect();
    let block = mim_features(&d, &[0.0, 0.0]).unwrap().block;
    let design = build_interacted(d.treatment(), &block);
    let f = fit(&design, d.outcome()).unwrap();
    let cr0 = robust_cov(&f, CovFlavor::Cr0, Some(&ids)).unwrap();
    let k = design.ncols();
    let x = nalgebra::DMatrix::from_fn(60, k, |i, j| design.columns().get(i, j));
    let bread = (x.transpose() * &x).try_inverse().unwrap();
    let mut meat = nalgebra::DMatrix::<f64>::zeros(k, k);
    for g in 0..13 {
        let mut s = nalgebra::DVector::<f64>::zeros(k);
        for i in (0..60).filter(|&i| ids[i] == g) {
            s += x.row(i).transpose() * f.residuals[i];
        }
        meat += &s * s.transpose();
    }
    let v = &bread * meat * &bread;
    for j in 0..k {
        assert!(rel_diff(cr0.variance(j).unwrap(), v[(j, j)]) < 1e-8);
    }
}

#[test]
fn efficiency_chain_of_oracle_variances() {
    for sc in [Scenario::I, Scenario::II, Scenario::III] {
        for seed in [DEFAULT_SEED, 5, 6] {
            let pop = gen_scenario(sc, 2000, seed).unwrap();
            let v = |s| oracle_variance(&pop, s, Model::L, &ImputePolicy::Zeros).unwrap();
            let chain = [v(Strategy::Mp), v(Strategy::Mim), v(Strategy::Imp), v(Strategy::Ccov), v(Strategy::Neyman)];
            for w in chain.windows(2) {
                assert!(w[0] <= w[1] * (1.0 + 1e-10), "{sc} seed {seed}: {chain:?}");
            }
        }
    }
}

#[test]
fn lin_oracle_matches_residual_route() {
    let pop = gen_scenario(Scenario::II, 1000, 9).unwrap();
    let n = pop.n();
    let n1 = pop.n_treated().unwrap();
    let z: Vec<bool> = (0..n).map(|i| i < n1).collect();
    let data = pop.observe(&z).unwrap();
    let w = mim_features(&data, &[0.0; 3]).unwrap().block.matrix;
    let mut cols = vec![vec![1.0; n]];
    cols.extend(w.columns().map(<[f64]>::to_vec));
    let resid = |y: &[f64]| -> Vec<f64> {
        let (beta, _) = nalgebra_ols(&cols, y);
        (0..n).map(|i| y[i] - (0..cols.len()).map(|k| cols[k][i] * beta[k]).sum::<f64>()).collect()
    };
    let r0 = resid(&pop.y0);
    let r1 = resid(&pop.y1);
    let e1 = n1 as f64 / n as f64;
    let e0 = 1.0 - e1;
    let mix: Vec<f64> = (0..n).map(|i| e0 * r1[i] + e1 * r0[i]).collect();
    let direct = variance(&mix) / (e0 * e1);
    let v = oracle_variance(&pop, Strategy::Mim, Model::L, &ImputePolicy::Zeros).unwrap();
    assert!(rel_diff(v, direct) < 1e-8, "{v} vs {direct}");
}

#[test]
fn balance_statistics_are_standard_normal_under_independent_missingness() {
    let pop = gen_scenario(Scenario::I, 500, DEFAULT_SEED).unwrap();
    let mut zs = Vec::new();
    for r in 0..400 {
        let z = pop.draw_assignment(&mut stream(DEFAULT_SEED, Purpose::Assignment, r));
        let report = balance_check(&pop.observe(&z).unwrap());
        zs.extend(report.indicators.iter().filter(|b| b.z != 0.0).map(|b| b.z));
    }
    let m = zs.iter().sum::<f64>() / zs.len() as f64;
    let v = variance(&zs);
    assert!(m.abs() < 0.1, "mean {m}");
    assert!((0.85..1.15).contains(&v), "variance {v}");
}

#[test]
fn balance_statistics_detect_treatment_dependent_missingness() {
    let pop = gen_treatment_dependent(2000, DEFAULT_SEED, 0.6).unwrap();
    let z = pop.draw_assignment(&mut stream(DEFAULT_SEED, Purpose::Assignment, 0));
    let report = balance_check(&pop.observe(&z).unwrap());
    assert!(report.max_abs_z() > 10.0);
}

#[test]
fn debias_constants_zero_out_the_imputation_bias_term() {
    let pop = gen_treatment_dependent(2000, 1, 0.6).unwrap();
    let z = pop.draw_assignment(&mut stream(1, Purpose::Assignment, 0));
    let d = pop.observe(&z).unwrap();
    let c = debias_constants(&d).unwrap();
    // The imputed covariate has equal arm means under the debiasing constants.
    for j in 0..d.j() {
        let arm_mean = |arm: bool| {
            let v: Vec<f64> = (0..d.n())
                .filter(|&i| d.treatment()[i] == arm)
                .map(|i| d.covariate(i, j).unwrap_or(c[j]))
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        if (0..d.n()).any(|i| d.mask().get(i, j)) {
            assert!((arm_mean(true) - arm_mean(false)).abs() < 1e-9, "covariate {j}");
        }
    }
    // A complete covariate gets the constant zero.
    let balanced = random_dataset(40, 1, 0.0, 2);
    assert_eq!(debias_constants(&balanced).unwrap(), vec![0.0]);
}

#[test]
fn debias_rejects_a_zero_denominator() {
    // Missingness rate identical across arms makes the constant undefined.
    let x = randadj::Matrix::from_columns(8, &[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]]);
    let mask = randadj::Mask::from_fn(8, 1, |i, _| i < 2);
    let z = (0..8).map(|i| i % 2 == 0).collect();
    let y = (0..8).map(|i| i as f64).collect();
    let d = randadj::ExperimentData::new(y, z, x, mask).unwrap();
    assert!(matches!(debias_constants(&d), Err(Error::ZeroDenominator { .. })));
}

#[test]
fn randomization_test_has_power_against_a_unit_effect() {
    let mut pop = gen_scenario(Scenario::II, 500, DEFAULT_SEED).unwrap();
    pop.y1 = pop.y0.iter().map(|v| v + 1.0).collect();
    pop.tau = 1.0;
    let spec = EstimatorSpec::new(Strategy::Mim, Model::L);
    let reps = 60;
    let rejections = (0..reps)
        .filter(|&r| {
            let z = pop.draw_assignment(&mut stream(DEFAULT_SEED, Purpose::Assignment, r));
            let d = pop.observe(&z).unwrap();
            frt_studentized(&d, &spec, 200, r).unwrap().p_value <= 0.05
        })
        .count();
    assert!(rejections as f64 / reps as f64 > 0.5, "{rejections} of {reps}");
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let pop = gen_scenario(Scenario::I, 200, 3).unwrap();
    let specs = vec![EstimatorSpec::neyman(), EstimatorSpec::new(Strategy::Mim, Model::L)];
    let dump = |threads| {
        let s = monte_carlo_with_threads(&pop, &specs, 50, 11, threads).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        s.write_summary_csv(&mut a).unwrap();
        s.write_replicates_csv(&mut b).unwrap();
        (a, b)
    };
    let one = dump(1);
    assert_eq!(one, dump(4));
    assert_eq!(one, dump(3));
}

#[test]
fn monte_carlo_rejects_a_single_replicate() {
    let pop = gen_scenario(Scenario::I, 100, 3).unwrap();
    assert!(monte_carlo(&pop, &[EstimatorSpec::neyman()], 1, 1).is_err());
}

#[test]
fn difference_in_means_is_unbiased_over_all_assignments() {
    let y0: Vec<f64> = (0..9).map(|i| (i * i) as f64 * 0.3).collect();
    let y1: Vec<f64> = y0.iter().enumerate().map(|(i, v)| v + (i % 3) as f64).collect();
    let tau = (y1.iter().sum::<f64>() - y0.iter().sum::<f64>()) / 9.0;
    let all = combinations(9, 4);
    let mean = all
        .iter()
        .map(|z| {
            let y = (0..9).map(|i| if z[i] { y1[i] } else { y0[i] }).collect();
            let d = randadj::ExperimentData::complete(y, z.clone(), randadj::Matrix::with_rows(9)).unwrap();
            estimate(&d, &EstimatorSpec::neyman()).unwrap().estimate
        })
        .sum::<f64>()
        / all.len() as f64;
    assert!((mean - tau).abs() < 1e-12);
}
