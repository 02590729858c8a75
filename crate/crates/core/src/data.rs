//! Subject-level records and their person-period expansion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trial participant restricted to the two-arm comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    /// Baseline covariates, ordered as in [`TrialData::covariate_names`].
    pub w: Vec<f64>,
    /// Calendar entry time.
    pub e: f64,
    /// Availability of the active arm at entry (concurrent subject).
    pub v_tilde: bool,
    /// `1` for the active arm, `0` for the shared control.
    pub a: u8,
    /// Observed period, `1..=K`.
    pub t_obs: usize,
    /// Event observed at `t_obs`.
    pub delta: bool,
    /// Design probability of availability given entry, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_avail: Option<f64>,
}

impl SubjectRecord {
    pub fn treated(&self) -> bool {
        self.a == 1
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.t_obs < 1 || self.t_obs > k {
            return Err(Error::Range(format!(
                "subject {}: observed time {} outside 1..={k}",
                self.id, self.t_obs
            )));
        }
        if self.a > 1 {
            return Err(Error::Range(format!("subject {}: arm {} not in {{0,1}}", self.id, self.a)));
        }
        if !self.v_tilde && self.a == 1 {
            return Err(Error::DesignViolation {
                ids: vec![self.id.clone()],
            });
        }
        if let Some(p) = self.p_avail {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Range(format!(
                    "subject {}: availability probability {p} outside [0,1]",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Administratively censored: followed event-free through the last period.
    pub fn administratively_censored(&self, k: usize) -> bool {
        !self.delta && self.t_obs == k
    }
}

/// A validated dataset: subjects plus the period count and covariate names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialData {
    pub k: usize,
    pub covariate_names: Vec<String>,
    pub subjects: Vec<SubjectRecord>,
}

impl TrialData {
    pub fn new(k: usize, covariate_names: Vec<String>, subjects: Vec<SubjectRecord>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("period count K must be at least 1".into()));
        }
        let mut violators = Vec::new();
        for s in &subjects {
            if s.w.len() != covariate_names.len() {
                return Err(Error::Range(format!(
                    "subject {}: {} covariates, expected {}",
                    s.id,
                    s.w.len(),
                    covariate_names.len()
                )));
            }
            match s.validate(k) {
                Ok(()) => {}
                Err(Error::DesignViolation { ids }) => violators.extend(ids),
                Err(e) => return Err(e),
            }
        }
        if !violators.is_empty() {
            return Err(Error::DesignViolation { ids: violators });
        }
        Ok(Self {
            k,
            covariate_names,
            subjects,
        })
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn concurrent_fraction(&self) -> f64 {
        if self.subjects.is_empty() {
            return 0.0;
        }
        self.subjects.iter().filter(|s| s.v_tilde).count() as f64 / self.n() as f64
    }

    pub fn person_period(&self) -> Result<PersonPeriodTable> {
        let mut table = expand_person_period(&self.subjects, self.k)?;
        table.covariate_names = self.covariate_names.clone();
        Ok(table)
    }

    /// New dataset built from the given subject indices (duplicates allowed).
    pub fn resample(&self, indices: &[usize]) -> TrialData {
        TrialData {
            k: self.k,
            covariate_names: self.covariate_names.clone(),
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
        }
    }

    /// Appends a covariate column; outcome fields are untouched.
    pub fn with_extra_covariate(&self, name: &str, values: &[f64]) -> Result<TrialData> {
        if values.len() != self.n() {
            return Err(Error::Range(format!(
                "covariate `{name}` has {} values for {} subjects",
                values.len(),
                self.n()
            )));
        }
        if self.covariate_index(name).is_some() {
            return Err(Error::Config(format!("covariate `{name}` already present")));
        }
        let mut out = self.clone();
        out.covariate_names.push(name.to_string());
        for (s, &v) in out.subjects.iter_mut().zip(values) {
            s.w.push(v);
        }
        Ok(out)
    }
}

/// One subject-period row of the longitudinal representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PersonPeriodRow {
    /// Index into [`PersonPeriodTable::subjects`].
    pub subject: usize,
    pub m: usize,
    /// `I_m`: at risk of an observed event.
    pub at_risk_event: bool,
    /// `J_m`: at risk of censoring.
    pub at_risk_censor: bool,
    /// `L_m`: event observed at `m`.
    pub event: bool,
    /// `R_m`: censored at `m` (never set at the administrative period `K`).
    pub censored: bool,
}

#[derive(Debug, Clone)]
pub struct PersonPeriodTable {
    pub k: usize,
    pub covariate_names: Vec<String>,
    pub subjects: Vec<SubjectRecord>,
    pub rows: Vec<PersonPeriodRow>,
}

/// Unfolds each subject into one row per period up to its observed time.
pub fn expand_person_period(subjects: &[SubjectRecord], k: usize) -> Result<PersonPeriodTable> {
    if k == 0 {
        return Err(Error::Config("period count K must be at least 1".into()));
    }
    let mut violators = Vec::new();
    for s in subjects {
        match s.validate(k) {
            Ok(()) => {}
            Err(Error::DesignViolation { ids }) => violators.extend(ids),
            Err(e) => return Err(e),
        }
    }
    if !violators.is_empty() {
        return Err(Error::DesignViolation { ids: violators });
    }

    let total: usize = subjects.iter().map(|s| s.t_obs).sum();
    let mut rows = Vec::with_capacity(total);
    for (idx, s) in subjects.iter().enumerate() {
        for m in 1..=s.t_obs {
            let last = m == s.t_obs;
            let event = last && s.delta;
            let censored = last && !s.delta && m < k;
            rows.push(PersonPeriodRow {
                subject: idx,
                m,
                at_risk_event: true,
                at_risk_censor: !event,
                event,
                censored,
            });
        }
    }
    let width = subjects.first().map_or(0, |s| s.w.len());
    Ok(PersonPeriodTable {
        k,
        covariate_names: (0..width).map(|j| format!("w{j}")).collect(),
        subjects: subjects.to_vec(),
        rows,
    })
}

impl PersonPeriodTable {
    /// Recovers `(t_obs, delta)` per subject from the indicator rows.
    pub fn reconstruct(&self) -> Vec<(usize, bool)> {
        let mut out = vec![(0usize, false); self.subjects.len()];
        for r in &self.rows {
            let slot = &mut out[r.subject];
            if r.m >= slot.0 {
                *slot = (r.m, r.event);
            }
        }
        out
    }

    pub fn rows_for(&self, subject: usize) -> impl Iterator<Item = &PersonPeriodRow> {
        self.rows.iter().filter(move |r| r.subject == subject)
    }
}
