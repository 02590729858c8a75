//! Monte Carlo study runner: replicates over a concurrent-fraction grid,
//! per-cell metrics against oracle truth, SE-ratio experiments, the
//! pooling-assumption × model-specification grid, and result files.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_methods, AvailabilitySource, EstimationConfig, Method, NuisanceSpec, PropensitySource,
};
use crate::rng::derive_seed;
use crate::simulation::{gen_trial, misspecify, truth_oracle, AvailabilityRegime, DgpConfig, TruthTable, COVARIATE, REPLACEMENT};
use crate::stats;

/// Cells with a larger share of failed replicates are flagged.
pub const FAILURE_FLAG_SHARE: f64 = 0.05;

const TRUTH_TAG: u64 = 0x7457;
const REPLACEMENT_TAG: u64 = 0x3157;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Specification {
    #[serde(rename = "correct")]
    Correct,
    #[serde(rename = "misspec")]
    Misspecified,
}

impl Specification {
    pub fn as_str(self) -> &'static str {
        match self {
            Specification::Correct => "correct",
            Specification::Misspecified => "misspec",
        }
    }
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Specification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correct" => Ok(Specification::Correct),
            "misspec" | "misspecified" => Ok(Specification::Misspecified),
            _ => Err(Error::Config(format!("unknown specification `{s}` (expected correct or misspec)"))),
        }
    }
}

pub fn regime_label(r: AvailabilityRegime) -> &'static str {
    match r {
        AvailabilityRegime::Deterministic => "det",
        AvailabilityRegime::Stochastic => "stoch",
    }
}

pub fn parse_regime(s: &str) -> Result<AvailabilityRegime> {
    match s {
        "det" | "deterministic" => Ok(AvailabilityRegime::Deterministic),
        "stoch" | "stochastic" => Ok(AvailabilityRegime::Stochastic),
        _ => Err(Error::Config(format!("unknown availability regime `{s}` (expected det or stoch)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Label written to every result row.
    pub scenario: String,
    /// Generator settings; `rho` and `seed` are overridden per replicate.
    pub dgp: DgpConfig,
    pub rho_grid: Vec<f64>,
    pub reps: usize,
    pub tau_list: Vec<usize>,
    pub specification: Specification,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub bootstrap_b: usize,
    /// Draws for each oracle truth.
    pub truth_reps: usize,
    /// Rate of the replacement covariate under misspecification.
    pub misspec_rate: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: "study".into(),
            dgp: DgpConfig::default(),
            rho_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            reps: 500,
            tau_list: vec![4, 8, 12],
            specification: Specification::Correct,
            methods: Method::ALL.to_vec(),
            master_seed: 20240601,
            bootstrap_b: 200,
            truth_reps: 1_000_000,
            misspec_rate: 2.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho_grid.is_empty() || self.tau_list.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("rho grid, tau list and methods must be nonempty".into()));
        }
        if self.reps < 2 {
            return Err(Error::Config(format!("need at least 2 replications, got {}", self.reps)));
        }
        for &rho in &self.rho_grid {
            DgpConfig { rho, ..self.dgp.clone() }.validate()?;
        }
        for &tau in &self.tau_list {
            if tau < 2 || tau > self.dgp.k {
                return Err(Error::Config(format!("tau {tau} outside 2..={}", self.dgp.k)));
            }
        }
        if self.methods.iter().any(|m| !m.is_doubly_robust()) && self.bootstrap_b < 2 {
            return Err(Error::Config("outcome-regression methods need bootstrap_b >= 2".into()));
        }
        if self.specification == Specification::Misspecified && !(self.misspec_rate > 0.0) {
            return Err(Error::Config("misspecification rate must be positive".into()));
        }
        Ok(())
    }

    /// Generator settings of replicate `rep` at grid point `rho_idx`.
    pub fn replicate_dgp(&self, rho_idx: usize, rep: usize) -> DgpConfig {
        DgpConfig {
            rho: self.rho_grid[rho_idx],
            seed: derive_seed(self.master_seed, &[rho_idx as u64, rep as u64]),
            ..self.dgp.clone()
        }
    }

    /// Generator settings of the oracle at grid point `rho_idx`.
    pub fn truth_dgp(&self, rho_idx: usize) -> DgpConfig {
        DgpConfig {
            rho: self.rho_grid[rho_idx],
            seed: derive_seed(self.master_seed, &[TRUTH_TAG, rho_idx as u64]),
            ..self.dgp.clone()
        }
    }

    /// Nuisance regressors and sources used by every replicate.
    pub fn nuisance(&self) -> NuisanceSpec {
        let mut spec = NuisanceSpec::with_covariates(&[COVARIATE]);
        spec.propensity = PropensitySource::Known { p: self.dgp.treatment_prob };
        if self.dgp.availability == AvailabilityRegime::Stochastic {
            spec.availability = AvailabilitySource::KnownProbability;
        }
        match self.specification {
            Specification::Correct => spec,
            Specification::Misspecified => spec.misspecified(COVARIATE, REPLACEMENT),
        }
    }
}

/// Estimates of one method on one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Mean of the centered influence values (doubly robust methods).
    pub influence_mean: Option<f64>,
}

/// Every method's outcome on one replicate and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub rho_idx: usize,
    pub rep: usize,
    pub tau: usize,
    pub results: Vec<(Method, Option<ReplicateEstimate>)>,
}

/// Oracle truths keyed by generator settings and horizon.
#[derive(Debug, Default)]
pub struct TruthCache {
    map: Mutex<HashMap<String, TruthTable>>,
}

impl TruthCache {
    pub fn get(&self, dgp: &DgpConfig, tau: usize, reps: usize) -> Result<TruthTable> {
        let key = format!("{}|{tau}|{reps}", serde_json::to_string(dgp)?);
        if let Some(t) = self.map.lock().expect("truth cache poisoned").get(&key) {
            return Ok(t.clone());
        }
        let t = truth_oracle(dgp, tau, reps)?;
        self.map.lock().expect("truth cache poisoned").insert(key, t.clone());
        Ok(t)
    }
}

/// Runs `reps` replicates at every grid point and horizon.
pub fn run_replicates(config: &ScenarioConfig) -> Result<Vec<ReplicateRecord>> {
    config.validate()?;
    let nuisance = config.nuisance();
    let units: Vec<(usize, usize)> = (0..config.rho_grid.len())
        .flat_map(|i| (0..config.reps).map(move |r| (i, r)))
        .collect();
    let total = units.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let records: Vec<Vec<ReplicateRecord>> = units
        .into_par_iter()
        .map(|(i, r)| {
            let out = run_one(config, &nuisance, i, r);
            let d = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if d % 50 == 0 || d == total {
                log::info!("{}: {d}/{total} replicates", config.scenario);
            }
            out
        })
        .collect::<Result<_>>()?;
    Ok(records.into_iter().flatten().collect())
}

fn run_one(config: &ScenarioConfig, nuisance: &NuisanceSpec, rho_idx: usize, rep: usize) -> Result<Vec<ReplicateRecord>> {
    let dgp = config.replicate_dgp(rho_idx, rep);
    let mut data = gen_trial(&dgp)?;
    if config.specification == Specification::Misspecified {
        data = misspecify(&data, config.misspec_rate, derive_seed(dgp.seed, &[REPLACEMENT_TAG]))?;
    }
    let mut out = Vec::with_capacity(config.tau_list.len());
    for &tau in &config.tau_list {
        let cfg = EstimationConfig {
            tau,
            nuisance: nuisance.clone(),
            bootstrap_b: config.bootstrap_b,
            seed: dgp.seed,
            ..Default::default()
        };
        let results = match estimate_methods(&data, &cfg, &config.methods) {
            Ok(rs) => rs
                .into_iter()
                .map(|(m, r)| match r {
                    Ok(r) => (
                        m,
                        Some(ReplicateEstimate {
                            estimate: r.estimate,
                            se: r.se,
                            ci_lo: r.ci_lo,
                            ci_hi: r.ci_hi,
                            influence_mean: r.influence.as_deref().map(stats::mean),
                        }),
                    ),
                    Err(e) => {
                        log::debug!("replicate {rho_idx}/{rep} {m} failed: {e}");
                        (m, None)
                    }
                })
                .collect(),
            Err(e) => {
                log::debug!("replicate {rho_idx}/{rep} unusable: {e}");
                config.methods.iter().map(|&m| (m, None)).collect()
            }
        };
        out.push(ReplicateRecord { rho_idx, rep, tau, results });
    }
    Ok(out)
}

/// Summary of one (scenario, rho, tau, method) cell. The variance column is
/// the sample variance of the point estimates (divisor `R - 1`); the MSE is
/// the mean squared deviation from the truth, so
/// `mse = bias_sq + (R - 1) / R * variance_sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub specification: Specification,
    pub regime: String,
    pub method: Method,
    pub rho: f64,
    pub tau: usize,
    pub truth: f64,
    pub truth_se: f64,
    pub reps: usize,
    pub failures: usize,
    pub flagged: bool,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mc_se: f64,
    pub bias_sq: f64,
    pub variance_sample: f64,
    pub mse: f64,
    pub coverage: f64,
    pub coverage_mcse: f64,
    pub mean_se: f64,
    /// Mean paired SE ratio against the pooled counterpart (oc rows only).
    pub se_ratio: Option<f64>,
}

pub const METRICS_HEADER: &str = "scenario,specification,regime,method,rho,tau,truth,truth_se,reps,failures,flagged,\
mean_estimate,bias,mc_se,bias_sq,variance_sample,mse,coverage,coverage_mcse,mean_se,se_ratio";

/// Metrics of `estimates` against `truth`; the CIs are the replicate Wald intervals.
pub fn cell_metrics(estimates: &[ReplicateEstimate], truth: f64) -> (f64, f64, f64, f64, f64, f64, f64) {
    let est: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
    let r = est.len() as f64;
    let mean = stats::mean(&est);
    let bias = mean - truth;
    let variance = stats::variance(&est);
    let mse = stats::mean(&est.iter().map(|e| (e - truth) * (e - truth)).collect::<Vec<_>>());
    let coverage = estimates.iter().filter(|e| e.ci_lo <= truth && truth <= e.ci_hi).count() as f64 / r;
    let mean_se = stats::mean(&estimates.iter().map(|e| e.se).collect::<Vec<_>>());
    (mean, bias, variance, mse, coverage, (coverage * (1.0 - coverage) / r).sqrt(), mean_se)
}

fn pooled_partner(m: Method) -> Option<Method> {
    match m {
        Method::OrOc => Some(Method::OrAc),
        Method::DrOc => Some(Method::DrAc),
        _ => None,
    }
}

/// Mean over replicates of `SE(method) / SE(partner)` where both succeeded.
pub fn mean_se_ratio(records: &[&ReplicateRecord], method: Method, partner: Method) -> Option<f64> {
    let ratios: Vec<f64> = records
        .iter()
        .filter_map(|r| {
            let find = |m| r.results.iter().find(|(x, _)| *x == m).and_then(|(_, e)| *e);
            match (find(method), find(partner)) {
                (Some(a), Some(b)) if b.se > 0.0 => Some(a.se / b.se),
                _ => None,
            }
        })
        .collect();
    (!ratios.is_empty()).then(|| stats::mean(&ratios))
}

/// Reduces replicate records to metrics rows, ordered by tau, rho, method.
pub fn summarize(config: &ScenarioConfig, records: &[ReplicateRecord], truths: &TruthCache) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &tau in &config.tau_list {
        for (i, &rho) in config.rho_grid.iter().enumerate() {
            let truth = truths.get(&config.truth_dgp(i), tau, config.truth_reps)?;
            let mut cell: Vec<&ReplicateRecord> = records.iter().filter(|r| r.tau == tau && r.rho_idx == i).collect();
            cell.sort_by_key(|r| r.rep);
            for &m in &config.methods {
                let ok: Vec<ReplicateEstimate> = cell
                    .iter()
                    .filter_map(|r| r.results.iter().find(|(x, _)| *x == m).and_then(|(_, e)| *e))
                    .collect();
                let failures = cell.len() - ok.len();
                let (mean, bias, variance, mse, coverage, cov_mcse, mean_se) = if ok.is_empty() {
                    (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
                } else {
                    cell_metrics(&ok, truth.drmst)
                };
                let se_ratio = pooled_partner(m)
                    .filter(|p| config.methods.contains(p))
                    .and_then(|p| mean_se_ratio(&cell, m, p));
                rows.push(MetricsRow {
                    scenario: config.scenario.clone(),
                    specification: config.specification,
                    regime: regime_label(config.dgp.availability).into(),
                    method: m,
                    rho,
                    tau,
                    truth: truth.drmst,
                    truth_se: truth.drmst_se,
                    reps: ok.len(),
                    failures,
                    flagged: failures as f64 > FAILURE_FLAG_SHARE * cell.len() as f64,
                    mean_estimate: mean,
                    bias,
                    mc_se: (variance / ok.len() as f64).sqrt(),
                    bias_sq: bias * bias,
                    variance_sample: variance,
                    mse,
                    coverage,
                    coverage_mcse: cov_mcse,
                    mean_se,
                    se_ratio,
                });
            }
        }
    }
    Ok(rows)
}

/// Full study: replicates, oracle truths and per-cell metrics.
pub fn run_study(config: &ScenarioConfig) -> Result<Vec<MetricsRow>> {
    run_study_with(config, &TruthCache::default())
}

pub fn run_study_with(config: &ScenarioConfig, truths: &TruthCache) -> Result<Vec<MetricsRow>> {
    let records = run_replicates(config)?;
    summarize(config, &records, truths)
}

/// Mean paired SE ratio of an oc estimator to its pooled counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub regime: String,
    pub specification: Specification,
    pub rho: f64,
    pub tau: usize,
    /// `DR` or `OR`.
    pub pair: String,
    pub mean_ratio: f64,
    pub pairs: usize,
}

pub const RATIO_HEADER: &str = "regime,specification,rho,tau,pair,mean_ratio,pairs";

/// SE ratios `oc / ac` for the DR and OR pairs in each availability regime.
/// Metrics are not needed, so no oracle truth is computed.
pub fn se_ratio_study(config: &ScenarioConfig, regimes: &[AvailabilityRegime]) -> Result<Vec<RatioRow>> {
    let mut rows = Vec::new();
    for &regime in regimes {
        let cfg = ScenarioConfig {
            dgp: DgpConfig { availability: regime, ..config.dgp.clone() },
            ..config.clone()
        };
        let records = run_replicates(&cfg)?;
        for &tau in &cfg.tau_list {
            for (i, &rho) in cfg.rho_grid.iter().enumerate() {
                let cell: Vec<&ReplicateRecord> = records.iter().filter(|r| r.tau == tau && r.rho_idx == i).collect();
                for (pair, oc, ac) in [("DR", Method::DrOc, Method::DrAc), ("OR", Method::OrOc, Method::OrAc)] {
                    if !(cfg.methods.contains(&oc) && cfg.methods.contains(&ac)) {
                        continue;
                    }
                    let pairs = cell
                        .iter()
                        .filter(|r| {
                            r.results.iter().filter(|(m, e)| (*m == oc || *m == ac) && e.is_some()).count() == 2
                        })
                        .count();
                    rows.push(RatioRow {
                        regime: regime_label(regime).into(),
                        specification: cfg.specification,
                        rho,
                        tau,
                        pair: pair.into(),
                        mean_ratio: mean_se_ratio(&cell, oc, ac).unwrap_or(f64::NAN),
                        pairs,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Runs the four cells {pooling assumption holds, violated by a shift of
/// `gamma` in the concurrent control event logit} × {correct, misspecified}.
/// Rows carry scenario labels `a7_true` / `a7_false`; the truth is always the
/// concurrent-population value of the generating process in that cell.
pub fn a7_scenario_grid(config: &ScenarioConfig, gamma: f64, truths: &TruthCache) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for (label, shift) in [("a7_true", 0.0), ("a7_false", gamma)] {
        for spec in [Specification::Correct, Specification::Misspecified] {
            let cfg = ScenarioConfig {
                scenario: label.into(),
                specification: spec,
                dgp: DgpConfig { control_shift: shift, ..config.dgp.clone() },
                ..config.clone()
            };
            rows.extend(run_study_with(&cfg, truths)?);
        }
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(rows: &[T], header: &str, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows to write".into()));
    }
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut out = format!("{header}\n").into_bytes();
    out.extend(buf);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    if first != header {
        return Err(Error::Config(format!("{} does not have the expected header", path.display())));
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Writes metrics rows as CSV with [`METRICS_HEADER`].
pub fn emit_results(rows: &[MetricsRow], path: &Path) -> Result<()> {
    write_rows(rows, METRICS_HEADER, path)
}

pub fn parse_results(path: &Path) -> Result<Vec<MetricsRow>> {
    read_rows(path, METRICS_HEADER)
}

pub fn emit_ratios(rows: &[RatioRow], path: &Path) -> Result<()> {
    write_rows(rows, RATIO_HEADER, path)
}

pub fn parse_ratios(path: &Path) -> Result<Vec<RatioRow>> {
    read_rows(path, RATIO_HEADER)
}

/// Everything needed to re-run a command that produced result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub conventions: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, master_seed: u64, config: &impl Serialize, outputs: &[&str]) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed,
            config: serde_json::to_value(config)?,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            conventions: vec![
                "variance_sample: sample variance of point estimates, divisor R-1".into(),
                "mse: mean of squared deviations from the oracle truth, divisor R".into(),
                "coverage: share of 95% Wald intervals containing the oracle truth".into(),
                "replicate seed: derive_seed(master_seed, [rho index, replicate index])".into(),
            ],
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rep(estimate: f64, half: f64) -> ReplicateEstimate {
        ReplicateEstimate {
            estimate,
            se: half / 1.96,
            ci_lo: estimate - half,
            ci_hi: estimate + half,
            influence_mean: None,
        }
    }

    #[test]
    fn exact_estimates_give_zero_error() {
        let (_, bias, var, mse, cov, cov_se, _) = cell_metrics(&[rep(2.0, 0.1), rep(2.0, 0.1), rep(2.0, 0.1)], 2.0);
        assert_eq!((bias, var, mse, cov, cov_se), (0.0, 0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn variance_and_mse_conventions() {
        let (_, bias, var, mse, cov, ..) = cell_metrics(&[rep(4.0, 0.5), rep(6.0, 0.5)], 5.0);
        assert_eq!((bias, var, mse, cov), (0.0, 2.0, 1.0, 0.0));
    }

    #[test]
    fn mse_decomposes_with_replicate_factor() {
        let est: Vec<ReplicateEstimate> = (0..37).map(|i| rep(((i * 7919) % 101) as f64 / 17.0, 1.0)).collect();
        let (_, bias, var, mse, ..) = cell_metrics(&est, 1.3);
        let r = 37.0;
        assert_abs_diff_eq!(mse, bias * bias + (r - 1.0) / r * var, epsilon = 1e-10);
    }

    #[test]
    fn identical_slots_give_unit_ratio() {
        let e = Some(rep(1.0, 0.3));
        let rec = ReplicateRecord {
            rho_idx: 0,
            rep: 0,
            tau: 8,
            results: vec![(Method::DrOc, e), (Method::DrAc, e)],
        };
        assert_eq!(mean_se_ratio(&[&rec], Method::DrOc, Method::DrAc), Some(1.0));
    }

    #[test]
    fn defaults_follow_the_study_design() {
        let c = ScenarioConfig::default();
        assert_eq!(c.rho_grid.len(), 9);
        assert_abs_diff_eq!(c.rho_grid[0], 0.1);
        assert_abs_diff_eq!(c.rho_grid[8], 0.9);
        assert_eq!((c.reps, c.tau_list.clone()), (500, vec![4, 8, 12]));
        assert_eq!(c.methods.len(), 5);
        let mis = ScenarioConfig { specification: Specification::Misspecified, ..c };
        assert!(mis.nuisance().event_terms.iter().all(|t| !t.references_entry()));
    }

    #[test]
    fn empty_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_results(&[], &dir.path().join("x.csv")).is_err());
    }
}
