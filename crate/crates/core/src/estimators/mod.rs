//! Outcome-regression, doubly robust and naive estimators of the
//! restricted-mean difference, with their standard errors.

pub mod bootstrap;
pub mod eif;
pub mod inference;
pub mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{PersonPeriodTable, SubjectRecord, TrialData};
use crate::error::{Error, Result};
use crate::estimands::{ThetaCurve, CONCURRENT};
use crate::hazard::{
    fit_hazard_with, known_propensity, ArmStratum, AvailabilityModel, Conditioning, HazardFit, ModelSpec, Propensity,
    Term, TimeHandling,
};
use crate::logistic::LogisticOptions;

pub use bootstrap::{bootstrap_se, bootstrap_weighted, BootstrapSummary};
pub use eif::{compute_eif, CurveInfluence, DrNuisances, EifTerms, Variant};
pub use inference::{delta_from_moments, delta_ratio, pointwise_bands, Band};
pub use report::{parse_methods, wald, EstimateReport, EstimateRow, Estimand, Method, ReportMeta, SeSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropensitySource {
    /// Randomization probability of the active arm among concurrent subjects.
    Known { p: f64 },
    Fitted { terms: Vec<Term> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AvailabilitySource {
    /// Availability is a deterministic function of entry time.
    Design,
    /// Per-subject design probabilities stored with the data.
    KnownProbability,
    Fitted { terms: Vec<Term> },
}

/// Regressors and sources for every nuisance function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpec {
    pub event_terms: Vec<Term>,
    pub censor_terms: Vec<Term>,
    pub time: TimeHandling,
    pub propensity: PropensitySource,
    pub availability: AvailabilitySource,
}

impl NuisanceSpec {
    /// Entry time plus the given covariates in every hazard, per-period fits,
    /// randomization probability one half, deterministic availability.
    pub fn with_covariates(covariates: &[&str]) -> Self {
        Self {
            event_terms: ModelSpec::default_terms(covariates),
            censor_terms: ModelSpec::default_terms(covariates),
            time: TimeHandling::PerPeriod,
            propensity: PropensitySource::Known { p: 0.5 },
            availability: AvailabilitySource::Design,
        }
    }

    /// Drops entry time from both hazards and swaps `original` for `replacement`.
    pub fn misspecified(&self, original: &str, replacement: &str) -> Self {
        let swap = |terms: &[Term]| {
            ModelSpec::event(ArmStratum::Both, Conditioning::Pooled, terms.to_vec())
                .misspecified(original, replacement)
                .terms
        };
        Self {
            event_terms: swap(&self.event_terms),
            censor_terms: swap(&self.censor_terms),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    pub tau: usize,
    pub nuisance: NuisanceSpec,
    pub truncation_floor: f64,
    pub bootstrap_b: usize,
    pub seed: u64,
    /// Pooled and concurrent control censoring hazards further apart than
    /// this trigger a warning for the pooled doubly robust estimator.
    pub censoring_gap_threshold: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            tau: 8,
            nuisance: NuisanceSpec::with_covariates(&["w"]),
            truncation_floor: 1e-6,
            bootstrap_b: 200,
            seed: 1,
            censoring_gap_threshold: 0.05,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.tau < 2 || self.tau > k {
            return Err(Error::Config(format!("tau {} outside 2..={k}", self.tau)));
        }
        if !(self.truncation_floor > 0.0) {
            return Err(Error::Config("truncation floor must be positive".into()));
        }
        if let PropensitySource::Known { p } = self.nuisance.propensity {
            known_propensity(p)?;
        }
        Ok(())
    }
}

/// Identifies one fitted nuisance regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NuisanceKey {
    EventTreated,
    EventControl(Conditioning),
    NaiveTreated,
    NaiveControl,
    CensorTreated,
    CensorControl(Conditioning),
    Treatment,
    Availability,
}

impl NuisanceKey {
    pub fn spec(self, cfg: &EstimationConfig) -> Option<ModelSpec> {
        let n = &cfg.nuisance;
        let with_time = |mut s: ModelSpec| {
            s.time = n.time;
            s
        };
        Some(match self {
            NuisanceKey::EventTreated => {
                with_time(ModelSpec::event(ArmStratum::Treated, Conditioning::ConcurrentOnly, n.event_terms.clone()))
                    .with_horizon(cfg.tau)
            }
            NuisanceKey::EventControl(c) => {
                with_time(ModelSpec::event(ArmStratum::Control, c, n.event_terms.clone())).with_horizon(cfg.tau)
            }
            NuisanceKey::NaiveTreated => ModelSpec::naive(ArmStratum::Treated).with_horizon(cfg.tau),
            NuisanceKey::NaiveControl => ModelSpec::naive(ArmStratum::Control).with_horizon(cfg.tau),
            NuisanceKey::CensorTreated => {
                with_time(ModelSpec::censor(ArmStratum::Treated, Conditioning::ConcurrentOnly, n.censor_terms.clone()))
                    .with_horizon(cfg.tau - 1)
            }
            NuisanceKey::CensorControl(c) => {
                with_time(ModelSpec::censor(ArmStratum::Control, c, n.censor_terms.clone())).with_horizon(cfg.tau - 1)
            }
            NuisanceKey::Treatment => match &n.propensity {
                PropensitySource::Fitted { terms } => ModelSpec::treatment(terms.clone()),
                PropensitySource::Known { .. } => return None,
            },
            NuisanceKey::Availability => match &n.availability {
                AvailabilitySource::Fitted { terms } => ModelSpec::availability(terms.clone()),
                _ => return None,
            },
        })
    }
}

/// Fitted nuisances for one dataset, filled on demand.
#[derive(Debug, Clone, Default)]
pub struct NuisanceFits {
    fits: HashMap<NuisanceKey, HazardFit>,
}

impl NuisanceFits {
    pub fn get(&self, key: NuisanceKey) -> Option<&HazardFit> {
        self.fits.get(&key)
    }

    fn require(&self, key: NuisanceKey) -> &HazardFit {
        self.fits.get(&key).expect("nuisance fitted before use")
    }

    fn ensure(
        &mut self,
        key: NuisanceKey,
        table: &PersonPeriodTable,
        cfg: &EstimationConfig,
        warm: Option<&NuisanceFits>,
        weights: Option<&[f64]>,
    ) -> Result<()> {
        if self.fits.contains_key(&key) {
            return Ok(());
        }
        let spec = key
            .spec(cfg)
            .ok_or_else(|| Error::Config(format!("{key:?} is not a fitted nuisance under this configuration")))?;
        let start = warm.and_then(|w| w.get(key));
        let fit = fit_hazard_with(table, &spec, &LogisticOptions::default(), start, weights)?;
        self.fits.insert(key, fit);
        Ok(())
    }

    fn any_fallback(&self, keys: &[NuisanceKey]) -> bool {
        keys.iter().filter_map(|k| self.fits.get(k)).any(|f| f.fallback)
    }
}

fn or_keys(method: Method) -> Option<[NuisanceKey; 2]> {
    match method {
        Method::OrOc => Some([NuisanceKey::EventTreated, NuisanceKey::EventControl(Conditioning::ConcurrentOnly)]),
        Method::OrAc => Some([NuisanceKey::EventTreated, NuisanceKey::EventControl(Conditioning::Pooled)]),
        Method::Naive => Some([NuisanceKey::NaiveTreated, NuisanceKey::NaiveControl]),
        _ => None,
    }
}

fn dr_keys(variant: Variant) -> [NuisanceKey; 4] {
    let c = match variant {
        Variant::Oc => Conditioning::ConcurrentOnly,
        Variant::Ac => Conditioning::Pooled,
    };
    [
        NuisanceKey::EventTreated,
        NuisanceKey::EventControl(c),
        NuisanceKey::CensorTreated,
        NuisanceKey::CensorControl(c),
    ]
}

/// Weighted mean over concurrent subjects of `prod_{m<=t} (1 - h(m|X))`, `t = 1..=tau`.
pub fn plugin_curve(fit: &HazardFit, subjects: &[SubjectRecord], weights: Option<&[f64]>, tau: usize) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; tau];
    let mut total = 0.0;
    for (i, s) in subjects.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if !s.v_tilde || w == 0.0 {
            continue;
        }
        total += w;
        let mut surv = 1.0;
        for (t, acc) in sums.iter_mut().enumerate() {
            let h = fit.predict(t + 1, s)?;
            if !(0.0..1.0).contains(&h) {
                return Err(Error::DegenerateHazard {
                    subject: i,
                    period: t + 1,
                    value: h,
                });
            }
            surv *= 1.0 - h;
            *acc += w * surv;
        }
    }
    if total == 0.0 {
        return Err(Error::EmptyPopulation("no concurrent subjects to average over".into()));
    }
    Ok(sums.into_iter().map(|s| s / total).collect())
}

fn restricted_mean_difference(theta1: &[f64], theta0: &[f64], tau: usize) -> f64 {
    (0..tau - 1).map(|j| theta1[j] - theta0[j]).sum()
}

/// Outcome-regression curves and estimate for an OR-type method.
#[derive(Debug, Clone)]
pub struct OrEstimate {
    pub treated: ThetaCurve,
    pub control: ThetaCurve,
    pub estimate: f64,
}

/// Per-dataset estimation state: the person-period table and cached fits.
pub struct Estimator<'a> {
    data: &'a TrialData,
    table: PersonPeriodTable,
    cfg: &'a EstimationConfig,
    fits: NuisanceFits,
}

impl<'a> Estimator<'a> {
    pub fn new(data: &'a TrialData, cfg: &'a EstimationConfig) -> Result<Self> {
        cfg.validate(data.k)?;
        if !data.subjects.iter().any(|s| s.v_tilde && s.treated()) {
            return Err(Error::EmptyPopulation("no concurrent subjects in the active arm".into()));
        }
        if !data.subjects.iter().any(|s| s.v_tilde && !s.treated()) {
            return Err(Error::EmptyPopulation("no concurrent controls".into()));
        }
        Ok(Self {
            data,
            table: data.person_period()?,
            cfg,
            fits: NuisanceFits::default(),
        })
    }

    pub fn fits(&self) -> &NuisanceFits {
        &self.fits
    }

    pub fn fit(&mut self, key: NuisanceKey) -> Result<&HazardFit> {
        self.fits.ensure(key, &self.table, self.cfg, None, None)?;
        Ok(self.fits.require(key))
    }

    fn meta(&self) -> ReportMeta {
        ReportMeta {
            n: self.data.n(),
            n_concurrent: self.data.subjects.iter().filter(|s| s.v_tilde).count(),
            seed: Some(self.cfg.seed),
            ..Default::default()
        }
    }

    /// Point estimate and curves of an OR-type method (no standard error).
    pub fn outcome_regression(&mut self, method: Method) -> Result<OrEstimate> {
        let keys = or_keys(method).ok_or_else(|| Error::Config(format!("{method} is not an outcome-regression method")))?;
        for k in keys {
            self.fits.ensure(k, &self.table, self.cfg, None, None)?;
        }
        let tau = self.cfg.tau;
        let s1 = plugin_curve(self.fits.require(keys[0]), &self.data.subjects, None, tau)?;
        let s0 = plugin_curve(self.fits.require(keys[1]), &self.data.subjects, None, tau)?;
        let source = |k: NuisanceKey| format!("{method}:{k:?}");
        Ok(OrEstimate {
            estimate: restricted_mean_difference(&s1, &s0, tau),
            treated: ThetaCurve::from_values(1, &s1, CONCURRENT, &source(keys[0])),
            control: ThetaCurve::from_values(0, &s0, CONCURRENT, &source(keys[1])),
        })
    }

    fn propensity(&mut self) -> Result<Propensity> {
        Ok(match &self.cfg.nuisance.propensity {
            PropensitySource::Known { p } => Propensity::Known(known_propensity(*p)?),
            PropensitySource::Fitted { .. } => Propensity::Fitted(self.fit(NuisanceKey::Treatment)?.clone()),
        })
    }

    fn availability(&mut self) -> Result<AvailabilityModel> {
        Ok(match &self.cfg.nuisance.availability {
            AvailabilitySource::Design => AvailabilityModel::Design,
            AvailabilitySource::KnownProbability => AvailabilityModel::KnownProbability,
            AvailabilitySource::Fitted { .. } => AvailabilityModel::Fitted(self.fit(NuisanceKey::Availability)?.clone()),
        })
    }

    /// Influence-function terms for the doubly robust estimator.
    pub fn influence(&mut self, variant: Variant) -> Result<EifTerms> {
        let keys = dr_keys(variant);
        for k in keys {
            self.fits.ensure(k, &self.table, self.cfg, None, None)?;
        }
        let propensity = self.propensity()?;
        let availability = self.availability()?;
        let nuis = DrNuisances {
            event_treated: self.fits.require(keys[0]),
            event_control: self.fits.require(keys[1]),
            censor_treated: self.fits.require(keys[2]),
            censor_control: self.fits.require(keys[3]),
            propensity: &propensity,
            availability: &availability,
        };
        compute_eif(&self.data.subjects, &nuis, self.cfg.tau, variant, self.cfg.truncation_floor)
    }

    /// Mean `|g_pooled - g_concurrent|` over concurrent controls and periods `m < tau`.
    pub fn censoring_pool_gap(&mut self) -> Result<f64> {
        let conc = NuisanceKey::CensorControl(Conditioning::ConcurrentOnly);
        let pooled = NuisanceKey::CensorControl(Conditioning::Pooled);
        self.fits.ensure(conc, &self.table, self.cfg, None, None)?;
        self.fits.ensure(pooled, &self.table, self.cfg, None, None)?;
        let (gc, gp) = (self.fits.require(conc), self.fits.require(pooled));
        let mut gaps = Vec::new();
        for s in self.data.subjects.iter().filter(|s| s.v_tilde && !s.treated()) {
            for m in 1..self.cfg.tau {
                gaps.push((gc.predict(m, s)? - gp.predict(m, s)?).abs());
            }
        }
        Ok(crate::stats::mean(&gaps))
    }

    fn dr_report(&mut self, method: Method) -> Result<EstimateReport> {
        let variant = if method == Method::DrOc { Variant::Oc } else { Variant::Ac };
        let terms = self.influence(variant)?;
        let mut meta = self.meta();
        meta.truncated = terms.truncated;
        meta.fallback = self.fits.any_fallback(&dr_keys(variant));
        if variant == Variant::Ac {
            match self.censoring_pool_gap() {
                Ok(gap) => {
                    if gap > self.cfg.censoring_gap_threshold {
                        log::warn!(
                            "pooled and concurrent control censoring hazards differ by {gap:.3} on average; \
                             pooling the censoring model may be unjustified"
                        );
                    }
                    meta.censoring_pool_gap = Some(gap);
                }
                Err(e) => log::debug!("censoring pool gap unavailable: {e}"),
            }
        }
        let mut report = EstimateReport::new(
            Estimand::Drmst { tau: self.cfg.tau },
            method,
            terms.estimate,
            terms.standard_error(),
            SeSource::Eif,
            meta,
        )?;
        report.influence = Some(terms.centered);
        Ok(report)
    }

    /// Bootstrap standard errors for several OR-type methods from shared resamples.
    fn bootstrap_or(&self, methods: &[Method]) -> Result<BootstrapSummary> {
        let tau = self.cfg.tau;
        let warm = &self.fits;
        bootstrap_weighted(self.data.n(), self.cfg.bootstrap_b, self.cfg.seed, |w| {
            let mut local = NuisanceFits::default();
            let mut out = Vec::with_capacity(methods.len());
            for &m in methods {
                let keys = or_keys(m).expect("OR-type method");
                for k in keys {
                    local.ensure(k, &self.table, self.cfg, Some(warm), Some(w))?;
                }
                let s1 = plugin_curve(local.require(keys[0]), &self.data.subjects, Some(w), tau)?;
                let s0 = plugin_curve(local.require(keys[1]), &self.data.subjects, Some(w), tau)?;
                out.push(restricted_mean_difference(&s1, &s0, tau));
            }
            Ok(out)
        })
    }

    /// Estimates every requested method; OR-type methods share bootstrap resamples.
    pub fn estimate(&mut self, methods: &[Method]) -> Vec<(Method, Result<EstimateReport>)> {
        let mut results: Vec<(Method, Result<EstimateReport>)> = Vec::with_capacity(methods.len());
        let mut or_points = Vec::new();
        for &m in methods {
            if m.is_doubly_robust() {
                results.push((m, self.dr_report(m)));
            } else {
                match self.outcome_regression(m) {
                    Ok(e) => or_points.push((m, e.estimate)),
                    Err(e) => results.push((m, Err(e))),
                }
            }
        }
        if !or_points.is_empty() {
            let ms: Vec<Method> = or_points.iter().map(|(m, _)| *m).collect();
            match self.bootstrap_or(&ms) {
                Ok(summary) => {
                    for (j, (m, est)) in or_points.iter().enumerate() {
                        let mut meta = self.meta();
                        meta.fallback = self.fits.any_fallback(&or_keys(*m).expect("OR-type method"));
                        meta.bootstrap_replicates = summary.replicates;
                        meta.bootstrap_failed = summary.failed;
                        let rep = EstimateReport::new(
                            Estimand::Drmst { tau: self.cfg.tau },
                            *m,
                            *est,
                            summary.se[j],
                            SeSource::Bootstrap,
                            meta,
                        );
                        results.push((*m, rep));
                    }
                }
                Err(e) => {
                    let msg = e.to_string();
                    for (m, _) in &or_points {
                        let err = match &e {
                            Error::BootstrapInstability { failed, total } => Error::BootstrapInstability {
                                failed: *failed,
                                total: *total,
                            },
                            _ => Error::Config(msg.clone()),
                        };
                        results.push((*m, Err(err)));
                    }
                }
            }
        }
        results.sort_by_key(|(m, _)| methods.iter().position(|x| x == m));
        results
    }
}

/// Outcome-regression estimate (`OR_oc`, `OR_ac` or `naive`) with bootstrap SE.
pub fn estimate_or(data: &TrialData, cfg: &EstimationConfig, method: Method) -> Result<EstimateReport> {
    if method.is_doubly_robust() {
        return Err(Error::Config(format!("{method} is not an outcome-regression method")));
    }
    Estimator::new(data, cfg)?.estimate(&[method]).pop().expect("one result").1
}

/// Doubly robust one-step estimate with influence-function SE.
pub fn estimate_dr(data: &TrialData, cfg: &EstimationConfig, variant: Variant) -> Result<EstimateReport> {
    let method = match variant {
        Variant::Oc => Method::DrOc,
        Variant::Ac => Method::DrAc,
    };
    Estimator::new(data, cfg)?.dr_report(method)
}

/// Runs several methods on one dataset, reusing fits across them.
pub fn estimate_methods(data: &TrialData, cfg: &EstimationConfig, methods: &[Method]) -> Result<Vec<(Method, Result<EstimateReport>)>> {
    Ok(Estimator::new(data, cfg)?.estimate(methods))
}
