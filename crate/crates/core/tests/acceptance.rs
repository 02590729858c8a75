//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. The Monte Carlo criteria run full-size
//! studies and take several minutes on one core.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

use platform_rmst::estimators::{
    compute_eif, DrNuisances, EstimationConfig, Estimator, Method, NuisanceSpec, PropensitySource, Variant,
};
use platform_rmst::harness::{
    a7_scenario_grid, emit_results, run_replicates, se_ratio_study, summarize, with_workers, MetricsRow,
    ReplicateRecord, ScenarioConfig, Specification, TruthCache,
};
use platform_rmst::hazard::{known_propensity, AvailabilityModel, Propensity};
use platform_rmst::rng::derive_seed;
use platform_rmst::simulation::{
    gen_trial, misspecify, oracle_hazards, truth_oracle, AvailabilityRegime, DgpConfig, COVARIATE, REPLACEMENT,
};
use platform_rmst::stats;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Check = platform_rmst::Result<Verdict>;

fn report(name: &str, started: Instant, outcome: Check, failures: &mut usize) {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(v) => {
            if !v.pass {
                *failures += 1;
            }
            println!("{} {name} ({secs:.1}s): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        }
        Err(e) => {
            *failures += 1;
            println!("FAIL {name} ({secs:.1}s): error: {e}");
        }
    }
}

fn cell<'a>(rows: &'a [MetricsRow], method: Method, rho: f64) -> &'a MetricsRow {
    rows.iter().find(|r| r.method == method && r.rho == rho).expect("metrics row present")
}

fn coverage_ok(c: f64) -> bool {
    (0.92..=0.98).contains(&c)
}

fn study_config(specification: Specification) -> ScenarioConfig {
    ScenarioConfig {
        scenario: "acceptance".into(),
        rho_grid: vec![0.3, 0.6, 0.9],
        reps: 200,
        tau_list: vec![8],
        specification,
        ..Default::default()
    }
}

type Study = platform_rmst::Result<(Vec<ReplicateRecord>, Vec<MetricsRow>)>;

fn study(specification: Specification, truths: &TruthCache) -> Study {
    let config = study_config(specification);
    let records = run_replicates(&config)?;
    let rows = summarize(&config, &records, truths)?;
    Ok((records, rows))
}

fn shared(s: &Study) -> platform_rmst::Result<&(Vec<ReplicateRecord>, Vec<MetricsRow>)> {
    s.as_ref().map_err(|e| platform_rmst::Error::Config(e.to_string()))
}

fn tiny_world_identification() -> Check {
    use common::{enumerate_theta, saturated_spec, tiny_world};
    let start = Instant::now();
    let data = tiny_world();
    let cfg = EstimationConfig { tau: 2, nuisance: saturated_spec(), bootstrap_b: 10, ..Default::default() };
    let (th1, th0) = (enumerate_theta(&data, 1), enumerate_theta(&data, 0));
    let truth = th1[0] - th0[0];
    let mut est = Estimator::new(&data, &cfg)?;
    let or = est.outcome_regression(Method::OrOc)?;
    let dr = est.influence(Variant::Oc)?;
    let mut worst: f64 = (or.estimate - truth).abs().max((dr.estimate - truth).abs());
    for t in 1..=2 {
        worst = worst
            .max((or.treated.at(t)? - th1[t - 1]).abs())
            .max((or.control.at(t)? - th0[t - 1]).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Verdict::new(worst < 1e-10 && secs < 1.0, format!("max deviation {worst:.1e}, {secs:.3}s")))
}

fn unbiased_and_covered(rows: &[MetricsRow], rhos: &[f64]) -> Verdict {
    let mut bad = Vec::new();
    for &rho in rhos {
        for m in Method::ALL {
            let r = cell(rows, m, rho);
            let share = r.bias_sq / r.mse;
            let cov = r.coverage;
            if !(share < 0.1 && coverage_ok(cov)) {
                bad.push(format!("{m}@{rho}: bias²/MSE {share:.3}, coverage {cov:.3}"));
            }
        }
    }
    let detail = if bad.is_empty() { "all 15 cells within bounds".to_string() } else { bad.join("; ") };
    Verdict::new(bad.is_empty(), detail)
}

fn pooling_bias_under_misspecification(rows: &[MetricsRow]) -> Verdict {
    let cov = |m, rho| cell(rows, m, rho).coverage;
    let or_ac = cov(Method::OrAc, 0.3);
    let mut pass = or_ac < 0.90;
    let mut parts = vec![format!("OR_ac@0.3 coverage {or_ac:.3}")];
    for rho in [0.3, 0.6, 0.9] {
        for m in [Method::DrOc, Method::DrAc] {
            let c = cov(m, rho);
            pass &= coverage_ok(c);
            parts.push(format!("{m}@{rho} {c:.3}"));
        }
    }
    Verdict::new(pass, parts.join(", "))
}

fn variance_ordering(rows: &[MetricsRow], rhos: &[f64]) -> Verdict {
    let mut violations = 0;
    let parts: Vec<String> = rhos
        .iter()
        .map(|&rho| {
            let (ac, oc) = (cell(rows, Method::OrAc, rho).variance_sample, cell(rows, Method::OrOc, rho).variance_sample);
            violations += (ac > oc) as usize;
            format!("rho {rho}: {ac:.5} vs {oc:.5}")
        })
        .collect();
    Verdict::new(violations <= 1, format!("{violations} violation(s); {}", parts.join(", ")))
}

fn influence_centered(records: &[&ReplicateRecord]) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for r in records {
        for (_, e) in &r.results {
            if let Some(m) = e.and_then(|e| e.influence_mean) {
                worst = worst.max(m.abs());
                count += 1;
            }
        }
    }
    Verdict::new(count > 0 && worst < 1e-12, format!("{count} datasets, max |mean| {worst:.1e}"))
}

fn ratio_config() -> ScenarioConfig {
    ScenarioConfig {
        scenario: "acceptance_ratio".into(),
        reps: 200,
        tau_list: vec![8],
        methods: vec![Method::DrOc, Method::DrAc],
        ..Default::default()
    }
}

fn dr_ratio_collapse() -> Check {
    let rows = se_ratio_study(&ratio_config(), &[AvailabilityRegime::Deterministic])?;
    let outside: Vec<String> = rows
        .iter()
        .filter(|r| !(0.97..=1.03).contains(&r.mean_ratio))
        .map(|r| format!("rho {} ratio {:.4}", r.rho, r.mean_ratio))
        .collect();
    let range = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.mean_ratio), hi.max(r.mean_ratio)));
    Ok(Verdict::new(
        outside.is_empty() && rows.len() == 9,
        format!("ratios in [{:.4}, {:.4}] over {} grid points {}", range.0, range.1, rows.len(), outside.join("; ")),
    ))
}

fn dr_ratio_gain() -> Check {
    let rows = se_ratio_study(&ratio_config(), &[AvailabilityRegime::Stochastic])?;
    let avg = stats::mean(&rows.iter().map(|r| r.mean_ratio).collect::<Vec<_>>());
    Ok(Verdict::new(avg >= 1.0 && rows.len() == 9, format!("grid-average DR_oc/DR_ac SE ratio {avg:.4}")))
}

/// Bias of DR_oc with one nuisance set wrong, at two sample sizes. The bias is
/// estimated both directly and through the paired difference to the one-step
/// estimator with the true nuisances on the same data, which removes most of
/// the Monte Carlo noise shared by the two.
fn double_robustness() -> Check {
    const REPS: usize = 200;
    let base = DgpConfig { rho: 0.5, ..Default::default() };
    let tau = 8;
    let truth = truth_oracle(&DgpConfig { seed: derive_seed(99, &[1]), ..base.clone() }, tau, 1_000_000)?;
    let oracle = oracle_hazards(&base, tau)?;
    let true_propensity = Propensity::Known(known_propensity(base.treatment_prob)?);

    let correct = NuisanceSpec::with_covariates(&[COVARIATE]);
    let wrong_hazard = NuisanceSpec { censor_terms: correct.censor_terms.clone(), ..correct.misspecified(COVARIATE, REPLACEMENT) };
    let wrong_censoring = NuisanceSpec {
        censor_terms: Vec::new(),
        propensity: PropensitySource::Known { p: 0.3 },
        ..correct.clone()
    };

    let mut pass = true;
    let mut parts = Vec::new();
    for (case, (label, spec)) in [("event hazard wrong", wrong_hazard), ("censoring+propensity wrong", wrong_censoring)]
        .into_iter()
        .enumerate()
    {
        let mut cv_bias = Vec::new();
        for n in [1500usize, 6000] {
            let cfg = EstimationConfig { tau, nuisance: spec.clone(), ..Default::default() };
            let pairs: Vec<(f64, f64)> = (0..REPS)
                .into_par_iter()
                .map(|r| {
                    let seed = derive_seed(2718, &[case as u64, n as u64, r as u64]);
                    let data = gen_trial(&DgpConfig { n, seed, ..base.clone() })?;
                    let data = misspecify(&data, 2.0, derive_seed(seed, &[7]))?;
                    let dr = Estimator::new(&data, &cfg)?.influence(Variant::Oc)?.estimate;
                    let nuis = DrNuisances {
                        event_treated: &oracle.event_treated,
                        event_control: &oracle.event_control,
                        censor_treated: &oracle.censor,
                        censor_control: &oracle.censor,
                        propensity: &true_propensity,
                        availability: &AvailabilityModel::Design,
                    };
                    let star = compute_eif(&data.subjects, &nuis, tau, Variant::Oc, cfg.truncation_floor)?.estimate;
                    Ok((dr, star))
                })
                .collect::<platform_rmst::Result<_>>()?;
            let raw: Vec<f64> = pairs.iter().map(|p| p.0 - truth.drmst).collect();
            let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
            let mcse = |v: &[f64]| stats::sd(v) / (v.len() as f64).sqrt();
            parts.push(format!(
                "{label} n={n}: raw bias {:+.5} (mcse {:.5}), paired bias {:+.5} (mcse {:.5})",
                stats::mean(&raw),
                mcse(&raw),
                stats::mean(&diff),
                mcse(&diff)
            ));
            cv_bias.push(stats::mean(&diff).abs());
        }
        pass &= cv_bias[1] < cv_bias[0];
    }
    Ok(Verdict::new(pass, parts.join("; ")))
}

fn pooling_assumption_grid() -> Check {
    let config = ScenarioConfig {
        scenario: "a7".into(),
        dgp: DgpConfig { availability: AvailabilityRegime::Stochastic, ..Default::default() },
        rho_grid: vec![0.5],
        reps: 200,
        tau_list: vec![8],
        methods: vec![Method::OrOc, Method::OrAc],
        bootstrap_b: 20,
        ..Default::default()
    };
    let truths = TruthCache::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (gamma, shifted) in [(0.5, true), (0.0, false)] {
        let rows = a7_scenario_grid(&config, gamma, &truths)?;
        let label = if shifted { "a7_false" } else { "a7_true" };
        for m in [Method::OrOc, Method::OrAc] {
            let r = rows
                .iter()
                .find(|r| r.scenario == label && r.specification == Specification::Correct && r.method == m)
                .expect("grid cell");
            let z = r.bias / (r.mc_se.powi(2) + r.truth_se.powi(2)).sqrt();
            let expect_far = shifted && m == Method::OrAc;
            pass &= if expect_far { z.abs() > 3.0 } else { z.abs() <= 3.0 };
            parts.push(format!("gamma {gamma} {m}: bias {:+.4}, z {z:+.2}", r.bias));
        }
    }
    Ok(Verdict::new(pass, parts.join("; ")))
}

fn worker_independence() -> Check {
    let config = ScenarioConfig {
        scenario: "determinism".into(),
        rho_grid: vec![0.3, 0.7],
        reps: 12,
        tau_list: vec![4, 8],
        bootstrap_b: 20,
        truth_reps: 20_000,
        ..Default::default()
    };
    let dir = tempfile::tempdir().map_err(|e| platform_rmst::Error::Config(e.to_string()))?;
    let mut bytes = Vec::new();
    for workers in [1, 3] {
        let path = dir.path().join(format!("results_{workers}.csv"));
        let rows = with_workers(workers, || {
            let records = run_replicates(&config)?;
            summarize(&config, &records, &TruthCache::default())
        })??;
        emit_results(&rows, &path)?;
        bytes.push(std::fs::read(&path).map_err(|e| platform_rmst::Error::Config(e.to_string()))?);
    }
    Ok(Verdict::new(bytes[0] == bytes[1], format!("{} bytes, identical: {}", bytes[0].len(), bytes[0] == bytes[1])))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let truths = TruthCache::default();

    let t = Instant::now();
    report("identification on a tiny discrete world", t, tiny_world_identification(), &mut failures);

    let t = Instant::now();
    let correct = study(Specification::Correct, &truths);
    let rhos = [0.3, 0.6, 0.9];
    report("unbiasedness and coverage, correct specification", t, shared(&correct).map(|(_, r)| unbiased_and_covered(r, &rhos)), &mut failures);
    report("variance ordering OR_ac <= OR_oc", t, shared(&correct).map(|(_, r)| variance_ordering(r, &rhos)), &mut failures);

    let t = Instant::now();
    let mis = study(Specification::Misspecified, &truths);
    report("pooling bias under misspecification", t, shared(&mis).map(|(_, r)| pooling_bias_under_misspecification(r)), &mut failures);

    let t = Instant::now();
    let all: Vec<&ReplicateRecord> = [&correct, &mis].into_iter().flatten().flat_map(|(rec, _)| rec).collect();
    report("centered influence values average to zero", t, Ok(influence_centered(&all)), &mut failures);

    let t = Instant::now();
    report("DR SE ratio collapses under deterministic availability", t, dr_ratio_collapse(), &mut failures);
    let t = Instant::now();
    report("DR SE ratio gain under stochastic availability", t, dr_ratio_gain(), &mut failures);
    let t = Instant::now();
    report("double robustness of DR_oc", t, double_robustness(), &mut failures);
    let t = Instant::now();
    report("pooling assumption grid", t, pooling_assumption_grid(), &mut failures);
    let t = Instant::now();
    report("results independent of worker count", t, worker_independence(), &mut failures);

    println!("{failures} criterion failure(s)");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
