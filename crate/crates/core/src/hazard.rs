//! Nuisance models: discrete-time event and censoring hazards, treatment
//! propensity and availability probability, all fitted as logistic regressions.

use serde::{Deserialize, Serialize};

use crate::data::{PersonPeriodTable, SubjectRecord, TrialData};
use crate::error::{Error, Result};
use crate::logistic::{expit, fit_logistic_from, DesignRows, LogisticOptions};

/// Name of the entry-time feature in term descriptions.
pub const ENTRY: &str = "E";
/// Name of the time-index feature.
pub const TIME: &str = "m";

/// A regressor in a nuisance model. An intercept is always included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Entry,
    Covariate(String),
    Time,
    Product(Vec<Term>),
}

impl Term {
    pub fn covariate(name: &str) -> Self {
        Term::Covariate(name.to_string())
    }

    pub fn name(&self) -> String {
        match self {
            Term::Entry => ENTRY.to_string(),
            Term::Covariate(c) => c.clone(),
            Term::Time => TIME.to_string(),
            Term::Product(ts) => ts.iter().map(Term::name).collect::<Vec<_>>().join(":"),
        }
    }

    pub fn references_entry(&self) -> bool {
        match self {
            Term::Entry => true,
            Term::Product(ts) => ts.iter().any(Term::references_entry),
            _ => false,
        }
    }

    fn references_time(&self) -> bool {
        match self {
            Term::Time => true,
            Term::Product(ts) => ts.iter().any(Term::references_time),
            _ => false,
        }
    }

    fn replace_covariate(&self, from: &str, to: &str) -> Term {
        match self {
            Term::Covariate(c) if c == from => Term::Covariate(to.to_string()),
            Term::Product(ts) => Term::Product(ts.iter().map(|t| t.replace_covariate(from, to)).collect()),
            other => other.clone(),
        }
    }

    fn resolve(&self, names: &[String]) -> Result<Resolved> {
        Ok(match self {
            Term::Entry => Resolved::Entry,
            Term::Time => Resolved::Time,
            Term::Covariate(c) => Resolved::Cov(
                names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::MissingColumn(c.clone()))?,
            ),
            Term::Product(ts) => Resolved::Product(ts.iter().map(|t| t.resolve(names)).collect::<Result<_>>()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Resolved {
    Entry,
    Cov(usize),
    Time,
    Product(Vec<Resolved>),
}

impl Resolved {
    fn eval(&self, s: &SubjectRecord, m: usize) -> f64 {
        match self {
            Resolved::Entry => s.e,
            Resolved::Cov(j) => s.w[*j],
            Resolved::Time => m as f64,
            Resolved::Product(ts) => ts.iter().map(|t| t.eval(s, m)).product(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Event,
    Censor,
    Treatment,
    Availability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Fit on subjects with the active arm available at entry.
    ConcurrentOnly,
    /// Fit on all subjects of the stratum regardless of availability.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmStratum {
    Control,
    Treated,
    Both,
}

impl ArmStratum {
    fn admits(self, s: &SubjectRecord) -> bool {
        match self {
            ArmStratum::Control => s.a == 0,
            ArmStratum::Treated => s.a == 1,
            ArmStratum::Both => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeHandling {
    /// One logistic regression per period.
    PerPeriod,
    /// A single regression with the period index as a linear covariate.
    TimeCovariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: Response,
    pub conditioning: Conditioning,
    pub arm: ArmStratum,
    pub terms: Vec<Term>,
    pub time: TimeHandling,
    /// Last period to fit; defaults to `K` (events) or `K - 1` (censoring).
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl ModelSpec {
    /// Entry time plus the named covariates, the data-generating form.
    pub fn default_terms(covariates: &[&str]) -> Vec<Term> {
        std::iter::once(Term::Entry)
            .chain(covariates.iter().map(|c| Term::covariate(c)))
            .collect()
    }

    pub fn event(arm: ArmStratum, conditioning: Conditioning, terms: Vec<Term>) -> Self {
        Self {
            response: Response::Event,
            conditioning,
            arm,
            terms,
            time: TimeHandling::PerPeriod,
            horizon: None,
        }
    }

    pub fn censor(arm: ArmStratum, conditioning: Conditioning, terms: Vec<Term>) -> Self {
        Self {
            response: Response::Censor,
            ..Self::event(arm, conditioning, terms)
        }
    }

    /// Concurrent-only event model with the time index as the sole regressor
    /// (saturated: one intercept per period).
    pub fn naive(arm: ArmStratum) -> Self {
        Self::event(arm, Conditioning::ConcurrentOnly, Vec::new())
    }

    pub fn treatment(terms: Vec<Term>) -> Self {
        Self {
            response: Response::Treatment,
            conditioning: Conditioning::ConcurrentOnly,
            arm: ArmStratum::Both,
            terms,
            time: TimeHandling::TimeCovariate,
            horizon: None,
        }
    }

    pub fn availability(terms: Vec<Term>) -> Self {
        Self {
            response: Response::Availability,
            conditioning: Conditioning::Pooled,
            arm: ArmStratum::Both,
            terms,
            time: TimeHandling::TimeCovariate,
            horizon: None,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn with_conditioning(mut self, conditioning: Conditioning) -> Self {
        self.conditioning = conditioning;
        self
    }

    /// Drops every term involving entry time and substitutes `replacement`
    /// for the covariate `original`.
    pub fn misspecified(&self, original: &str, replacement: &str) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|t| !t.references_entry())
            .map(|t| t.replace_covariate(original, replacement))
            .collect();
        Self {
            terms,
            ..self.clone()
        }
    }

    pub fn references_entry(&self) -> bool {
        self.terms.iter().any(Term::references_entry)
    }

    fn subject_level(&self) -> bool {
        matches!(self.response, Response::Treatment | Response::Availability)
    }

    fn admits(&self, s: &SubjectRecord) -> bool {
        self.arm.admits(s)
            && match self.conditioning {
                Conditioning::ConcurrentOnly => s.v_tilde,
                Conditioning::Pooled => true,
            }
    }

    fn last_period(&self, k: usize) -> usize {
        let cap = match self.response {
            Response::Censor => k.saturating_sub(1),
            _ => k,
        };
        self.horizon.map_or(cap, |h| h.min(cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub period: Option<usize>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// A fitted nuisance regression.
#[derive(Debug, Clone, Serialize)]
pub struct HazardFit {
    pub spec: ModelSpec,
    /// Time handling actually used (differs from the spec after a fallback).
    pub mode: TimeHandling,
    /// Set when per-period fitting failed at some period and the response was
    /// refitted with a linear time covariate.
    pub fallback: bool,
    /// Feature names, intercept first.
    pub feature_names: Vec<String>,
    /// Per-period coefficients indexed by `m - 1`, or a single vector.
    pub coefficients: Vec<Option<Vec<f64>>>,
    pub last_period: usize,
    pub convergence: Vec<Convergence>,
    #[serde(skip)]
    resolved: Vec<Resolved>,
}

fn features_into(out: &mut Vec<f64>, resolved: &[Resolved], s: &SubjectRecord, m: usize) {
    out.clear();
    out.push(1.0);
    out.extend(resolved.iter().map(|r| r.eval(s, m)));
}

fn rename_singular(err: Error, names: &[String]) -> Error {
    match err {
        Error::SingularDesign { columns } => Error::SingularDesign {
            columns: columns
                .iter()
                .map(|c| {
                    c.strip_prefix('x')
                        .and_then(|i| i.parse::<usize>().ok())
                        .and_then(|i| names.get(i).cloned())
                        .unwrap_or_else(|| c.clone())
                })
                .collect(),
        },
        other => other,
    }
}

fn response_of(spec: &ModelSpec, s: &SubjectRecord) -> bool {
    match spec.response {
        Response::Treatment => s.a == 1,
        Response::Availability => s.v_tilde,
        _ => unreachable!("person-period responses are read from rows"),
    }
}

/// Fits `spec` on the person-period table with default IRLS settings.
pub fn fit_hazard(table: &PersonPeriodTable, spec: &ModelSpec) -> Result<HazardFit> {
    fit_hazard_with(table, spec, &LogisticOptions::default(), None, None)
}

/// As [`fit_hazard`], optionally warm-starting from a previous fit of the same
/// spec. `weights` holds one non-negative multiplicity per subject; integer
/// weights reproduce a fit on the dataset with subjects duplicated accordingly.
pub fn fit_hazard_with(
    table: &PersonPeriodTable,
    spec: &ModelSpec,
    opts: &LogisticOptions,
    warm: Option<&HazardFit>,
    weights: Option<&[f64]>,
) -> Result<HazardFit> {
    if let Some(w) = weights {
        if w.len() != table.subjects.len() {
            return Err(Error::Range(format!(
                "{} subject weights for {} subjects",
                w.len(),
                table.subjects.len()
            )));
        }
    }
    let weight_of = |i: usize| weights.map_or(1.0, |w| w[i]);
    let names = &table.covariate_names;
    let mut terms = spec.terms.clone();
    let per_period = spec.time == TimeHandling::PerPeriod && !spec.subject_level();
    if per_period && terms.iter().any(Term::references_time) {
        return Err(Error::Config("per-period fits cannot include the time index".into()));
    }

    if spec.subject_level() {
        let resolved = terms.iter().map(|t| t.resolve(names)).collect::<Result<Vec<_>>>()?;
        let feature_names = feature_names(&terms);
        let mut rows = DesignRows::new(resolved.len() + 1);
        let mut buf = Vec::new();
        for (i, s) in table.subjects.iter().enumerate() {
            let wt = weight_of(i);
            if wt == 0.0 || !spec.admits(s) {
                continue;
            }
            features_into(&mut buf, &resolved, s, 0);
            rows.push(&buf, response_of(spec, s), wt);
        }
        if rows.is_empty() {
            return Err(Error::EmptyPopulation(format!("{:?} model has no subjects", spec.response)));
        }
        let start = warm.and_then(|w| w.coefficients.first().cloned().flatten());
        let fit = fit_logistic_from(&rows, opts, start.as_deref()).map_err(|e| match e {
            Error::Separation(msg) => Error::Separation(format!("{:?} model: {msg}", spec.response)),
            other => rename_singular(other, &feature_names),
        })?;
        return Ok(HazardFit {
            spec: spec.clone(),
            mode: TimeHandling::TimeCovariate,
            fallback: false,
            feature_names,
            convergence: vec![Convergence {
                period: None,
                iterations: fit.iterations,
                gradient_norm: fit.gradient_norm,
            }],
            coefficients: vec![Some(fit.coefficients)],
            last_period: 0,
            resolved,
        });
    }

    let last = spec.last_period(table.k);
    if last == 0 {
        return Err(Error::Range(format!("{:?} model has no periods to fit", spec.response)));
    }
    let risk = |r: &crate::data::PersonPeriodRow| match spec.response {
        Response::Event => r.at_risk_event,
        _ => r.at_risk_censor,
    };
    let outcome = |r: &crate::data::PersonPeriodRow| match spec.response {
        Response::Event => r.event,
        _ => r.censored,
    };

    if per_period {
        let resolved = terms.iter().map(|t| t.resolve(names)).collect::<Result<Vec<_>>>()?;
        let fnames = feature_names(&terms);
        let p = resolved.len() + 1;
        let mut per: Vec<DesignRows> = (0..last).map(|_| DesignRows::new(p)).collect();
        let mut buf = Vec::with_capacity(p);
        for r in &table.rows {
            if r.m > last || !risk(r) {
                continue;
            }
            let s = &table.subjects[r.subject];
            let wt = weight_of(r.subject);
            if wt == 0.0 || !spec.admits(s) {
                continue;
            }
            features_into(&mut buf, &resolved, s, r.m);
            per[r.m - 1].push(&buf, outcome(r), wt);
        }
        let warm_ok = warm.filter(|w| w.mode == TimeHandling::PerPeriod);
        let mut coefficients = Vec::with_capacity(last);
        let mut convergence = Vec::with_capacity(last);
        let mut failed = None;
        for (i, rows) in per.iter().enumerate() {
            let (pos, neg) = rows.class_weights();
            if rows.is_empty() || pos == 0.0 || neg == 0.0 {
                failed = Some(Error::EmptyPopulation(format!("period {}", i + 1)));
                break;
            }
            let start = warm_ok.and_then(|w| w.coefficients.get(i).cloned().flatten());
            match fit_logistic_from(rows, opts, start.as_deref()) {
                Ok(fit) => {
                    convergence.push(Convergence {
                        period: Some(i + 1),
                        iterations: fit.iterations,
                        gradient_norm: fit.gradient_norm,
                    });
                    coefficients.push(Some(fit.coefficients));
                }
                Err(e @ Error::SingularDesign { .. }) if rows.len() >= 10 * p => {
                    return Err(rename_singular(e, &fnames));
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        if failed.is_none() {
            return Ok(HazardFit {
                spec: spec.clone(),
                mode: TimeHandling::PerPeriod,
                fallback: false,
                feature_names: fnames,
                coefficients,
                last_period: last,
                convergence,
                resolved,
            });
        }
        log::debug!("per-period {:?} fit fell back to time covariate: {:?}", spec.response, failed);
        terms.push(Term::Time);
    } else if !terms.iter().any(|t| matches!(t, Term::Time)) {
        terms.push(Term::Time);
    }

    // single fit with the time index as a covariate
    let resolved = terms.iter().map(|t| t.resolve(names)).collect::<Result<Vec<_>>>()?;
    let fnames = feature_names(&terms);
    let p = resolved.len() + 1;
    let mut rows = DesignRows::with_capacity(p, table.rows.len());
    let mut buf = Vec::with_capacity(p);
    for r in &table.rows {
        if r.m > last || !risk(r) {
            continue;
        }
        let s = &table.subjects[r.subject];
        let wt = weight_of(r.subject);
        if wt == 0.0 || !spec.admits(s) {
            continue;
        }
        features_into(&mut buf, &resolved, s, r.m);
        rows.push(&buf, outcome(r), wt);
    }
    if rows.is_empty() {
        return Err(Error::EmptyPopulation(format!("{:?} model has an empty risk set", spec.response)));
    }
    let warm_ok = warm.filter(|w| w.mode == TimeHandling::TimeCovariate && w.feature_names == fnames);
    let start = warm_ok.and_then(|w| w.coefficients.first().cloned().flatten());
    let fit = fit_logistic_from(&rows, opts, start.as_deref()).map_err(|e| rename_singular(e, &fnames))?;
    Ok(HazardFit {
        spec: spec.clone(),
        mode: TimeHandling::TimeCovariate,
        fallback: per_period,
        feature_names: fnames,
        convergence: vec![Convergence {
            period: None,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
        }],
        coefficients: vec![Some(fit.coefficients)],
        last_period: last,
        resolved,
    })
}

fn feature_names(terms: &[Term]) -> Vec<String> {
    std::iter::once("(intercept)".to_string())
        .chain(terms.iter().map(Term::name))
        .collect()
}

impl HazardFit {
    /// Builds an evaluator from fixed per-period coefficients, bypassing fitting.
    pub fn from_coefficients(spec: ModelSpec, covariate_names: &[String], coefficients: Vec<Vec<f64>>) -> Result<Self> {
        let resolved = spec
            .terms
            .iter()
            .map(|t| t.resolve(covariate_names))
            .collect::<Result<Vec<_>>>()?;
        let p = resolved.len() + 1;
        if coefficients.iter().any(|c| c.len() != p) {
            return Err(Error::Config(format!("coefficient vectors must have length {p}")));
        }
        let mode = if coefficients.len() == 1 && spec.time == TimeHandling::TimeCovariate {
            TimeHandling::TimeCovariate
        } else {
            TimeHandling::PerPeriod
        };
        let last_period = if mode == TimeHandling::PerPeriod {
            coefficients.len()
        } else {
            spec.horizon.unwrap_or(usize::MAX)
        };
        Ok(Self {
            feature_names: feature_names(&spec.terms),
            spec,
            mode,
            fallback: false,
            coefficients: coefficients.into_iter().map(Some).collect(),
            last_period,
            convergence: Vec::new(),
            resolved,
        })
    }

    pub fn fitted_periods(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.last_period
    }

    fn coefficients_at(&self, m: usize) -> Result<&[f64]> {
        if self.spec.subject_level() {
            return Ok(self.coefficients[0].as_deref().expect("subject-level fit has coefficients"));
        }
        if m == 0 || m > self.last_period {
            return Err(Error::Range(format!(
                "period {m} outside fitted periods 1..={}",
                self.last_period
            )));
        }
        let slot = match self.mode {
            TimeHandling::PerPeriod => self.coefficients.get(m - 1),
            TimeHandling::TimeCovariate => self.coefficients.first(),
        };
        slot.and_then(|c| c.as_deref())
            .ok_or_else(|| Error::Range(format!("period {m} was not fitted")))
    }

    pub fn linear_predictor(&self, m: usize, s: &SubjectRecord) -> Result<f64> {
        let beta = self.coefficients_at(m)?;
        let mut eta = beta[0];
        for (b, r) in beta[1..].iter().zip(&self.resolved) {
            eta += b * r.eval(s, m);
        }
        Ok(eta)
    }

    /// Fitted probability at period `m` for subject covariates `s`.
    pub fn predict(&self, m: usize, s: &SubjectRecord) -> Result<f64> {
        Ok(expit(self.linear_predictor(m, s)?))
    }

    /// Subject-level models (treatment, availability) ignore the period.
    pub fn predict_subject(&self, s: &SubjectRecord) -> Result<f64> {
        self.predict(1, s)
    }
}

/// Convenience: fit directly from subject-level data.
pub fn fit_hazard_data(data: &TrialData, spec: &ModelSpec) -> Result<HazardFit> {
    fit_hazard(&data.person_period()?, spec)
}

/// Treatment probability known by randomization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownPropensity {
    p_treated: f64,
}

pub fn known_propensity(p: f64) -> Result<KnownPropensity> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Range(format!("treatment probability {p} outside (0,1)")));
    }
    Ok(KnownPropensity { p_treated: p })
}

impl KnownPropensity {
    pub fn p_treated(&self) -> f64 {
        self.p_treated
    }

    /// `P(A = arm | V = 1, X)`.
    pub fn prob(&self, arm: u8) -> f64 {
        if arm == 1 {
            self.p_treated
        } else {
            1.0 - self.p_treated
        }
    }
}

/// Concurrent-population treatment assignment model.
#[derive(Debug, Clone)]
pub enum Propensity {
    Known(KnownPropensity),
    Fitted(HazardFit),
}

impl Propensity {
    pub fn prob(&self, arm: u8, s: &SubjectRecord) -> Result<f64> {
        match self {
            Propensity::Known(k) => Ok(k.prob(arm)),
            Propensity::Fitted(f) => {
                let p1 = f.predict_subject(s)?;
                Ok(if arm == 1 { p1 } else { 1.0 - p1 })
            }
        }
    }
}

/// Source of `P(V = 1 | X)`.
#[derive(Debug, Clone)]
pub enum AvailabilityModel {
    /// Deterministic in entry time: the probability is the indicator itself.
    Design,
    /// Known design probability stored on each subject.
    KnownProbability,
    Fitted(HazardFit),
}

impl AvailabilityModel {
    pub fn prob(&self, s: &SubjectRecord) -> Result<f64> {
        match self {
            AvailabilityModel::Design => Ok(if s.v_tilde { 1.0 } else { 0.0 }),
            AvailabilityModel::KnownProbability => s
                .p_avail
                .ok_or_else(|| Error::Config(format!("subject {} lacks an availability probability", s.id))),
            AvailabilityModel::Fitted(f) => f.predict_subject(s),
        }
    }
}
