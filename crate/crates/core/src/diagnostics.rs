//! Decision aids for pooling non-concurrent controls: the stratified mixture
//! decomposition of the pooled control hazard and a risk-set size heuristic.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::PersonPeriodTable;
use crate::error::{Error, Result};

/// Quantile binning of entry time and one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrataSpec {
    pub entry_bins: usize,
    pub covariate: String,
    pub covariate_bins: usize,
    /// Concurrent and non-concurrent hazards further apart than this mark a stratum as suspect.
    pub threshold: f64,
}

impl Default for StrataSpec {
    fn default() -> Self {
        Self {
            entry_bins: 4,
            covariate: "w".into(),
            covariate_bins: 4,
            threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureCell {
    pub m: usize,
    pub entry_bin: usize,
    pub covariate_bin: usize,
    pub at_risk_concurrent: usize,
    pub at_risk_nonconcurrent: usize,
    pub hazard_concurrent: Option<f64>,
    pub hazard_nonconcurrent: Option<f64>,
    /// Share of the pooled control risk set that is concurrent.
    pub weight: f64,
    pub pooled_reconstructed: Option<f64>,
    pub pooled_direct: f64,
    pub discrepancy: Option<f64>,
    pub evaluable: bool,
    pub suspect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub threshold: f64,
    /// Availability is a threshold function of entry time in this sample, so
    /// no stratum can contain both kinds of control at the same covariates.
    pub availability_determined_by_entry: bool,
    pub cells: Vec<MixtureCell>,
}

impl MixtureReport {
    pub fn evaluable(&self) -> impl Iterator<Item = &MixtureCell> {
        self.cells.iter().filter(|c| c.evaluable)
    }

    pub fn suspect_fraction(&self) -> Option<f64> {
        let n = self.evaluable().count();
        (n > 0).then(|| self.evaluable().filter(|c| c.suspect).count() as f64 / n as f64)
    }

    /// Mean of `h_concurrent - h_nonconcurrent` over evaluable cells.
    pub fn mean_gap(&self) -> Option<f64> {
        let gaps: Vec<f64> = self
            .evaluable()
            .filter_map(|c| Some(c.hazard_concurrent? - c.hazard_nonconcurrent?))
            .collect();
        (!gaps.is_empty()).then(|| crate::stats::mean(&gaps))
    }
}

/// Cut points splitting `values` into `bins` groups of near-equal size.
fn quantile_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    (1..bins).map(|j| s[(j * s.len() / bins).min(s.len() - 1)]).collect()
}

fn bin_of(cuts: &[f64], x: f64) -> usize {
    cuts.iter().filter(|&&c| x >= c).count()
}

fn entry_separates(table: &PersonPeriodTable) -> bool {
    let range = |v: bool| {
        table
            .subjects
            .iter()
            .filter(|s| s.v_tilde == v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.e), hi.max(s.e)))
    };
    let (c, n) = (range(true), range(false));
    c.1 < n.0 || n.1 < c.0
}

/// Stratified concurrent and non-concurrent control event hazards, the
/// concurrent share of each control risk set, and the pooled hazard both
/// rebuilt from the mixture and computed directly.
pub fn mixture_decomposition(table: &PersonPeriodTable, spec: &StrataSpec) -> Result<MixtureReport> {
    if spec.entry_bins == 0 || spec.covariate_bins == 0 {
        return Err(Error::Config("strata need at least one bin per axis".into()));
    }
    let col = table
        .covariate_names
        .iter()
        .position(|c| c == &spec.covariate)
        .ok_or_else(|| Error::MissingColumn(spec.covariate.clone()))?;
    if !table.subjects.iter().any(|s| !s.treated()) {
        return Err(Error::EmptyPopulation("no control subjects".into()));
    }
    let entries: Vec<f64> = table.subjects.iter().map(|s| s.e).collect();
    let covs: Vec<f64> = table.subjects.iter().map(|s| s.w[col]).collect();
    let (ecuts, wcuts) = (quantile_cuts(&entries, spec.entry_bins), quantile_cuts(&covs, spec.covariate_bins));
    let determined = entry_separates(table);

    let (nb_e, nb_w) = (spec.entry_bins, spec.covariate_bins);
    // [m][stratum][concurrent] -> (at risk, events)
    let mut counts = vec![vec![[(0usize, 0usize); 2]; nb_e * nb_w]; table.k];
    for row in table.rows.iter().filter(|r| r.at_risk_event) {
        let s = &table.subjects[row.subject];
        if s.treated() {
            continue;
        }
        let stratum = bin_of(&ecuts, s.e) * nb_w + bin_of(&wcuts, s.w[col]);
        let c = &mut counts[row.m - 1][stratum][s.v_tilde as usize];
        c.0 += 1;
        c.1 += row.event as usize;
    }

    let mut cells = Vec::new();
    for (mi, per_m) in counts.iter().enumerate() {
        for (stratum, c) in per_m.iter().enumerate() {
            let [(n0, d0), (n1, d1)] = *c;
            if n0 + n1 == 0 {
                continue;
            }
            let total = (n0 + n1) as f64;
            let h = |d: usize, n: usize| (n > 0).then(|| d as f64 / n as f64);
            let (h1, h0) = (h(d1, n1), h(d0, n0));
            let weight = n1 as f64 / total;
            let evaluable = !determined && n1 > 0 && n0 > 0;
            let reconstructed = match (h1, h0) {
                (Some(a), Some(b)) => Some(a * weight + b * (1.0 - weight)),
                (Some(a), None) => Some(a),
                (None, Some(b)) => Some(b),
                (None, None) => None,
            };
            let discrepancy = match (h1, h0) {
                (Some(a), Some(b)) if evaluable => Some((a - b).abs()),
                _ => None,
            };
            cells.push(MixtureCell {
                m: mi + 1,
                entry_bin: stratum / nb_w,
                covariate_bin: stratum % nb_w,
                at_risk_concurrent: n1,
                at_risk_nonconcurrent: n0,
                hazard_concurrent: h1,
                hazard_nonconcurrent: h0,
                weight,
                pooled_reconstructed: reconstructed,
                pooled_direct: (d0 + d1) as f64 / total,
                discrepancy,
                evaluable,
                suspect: discrepancy.is_some_and(|d| d > spec.threshold),
            });
        }
    }
    Ok(MixtureReport {
        threshold: spec.threshold,
        availability_determined_by_entry: determined,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssRow {
    pub m: usize,
    /// Share of subjects that are controls at risk at `m`.
    pub c_pool: f64,
    /// Share of subjects that are concurrent controls at risk at `m`.
    pub c_conc: f64,
    /// `c_pool / c_conc`; infinite when no concurrent control is at risk.
    pub ratio: f64,
    pub infinite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub rows: Vec<EssRow>,
}

/// Per-period size of the pooled control risk set relative to the concurrent one.
pub fn ess_heuristic(table: &PersonPeriodTable) -> Result<EssReport> {
    if !table.subjects.iter().any(|s| !s.treated()) {
        return Err(Error::EmptyPopulation("no control subjects".into()));
    }
    let n = table.subjects.len() as f64;
    let mut pool = vec![0usize; table.k];
    let mut conc = vec![0usize; table.k];
    for row in table.rows.iter().filter(|r| r.at_risk_event) {
        let s = &table.subjects[row.subject];
        if !s.treated() {
            pool[row.m - 1] += 1;
            conc[row.m - 1] += s.v_tilde as usize;
        }
    }
    let rows = (0..table.k)
        .map(|j| {
            let infinite = conc[j] == 0;
            EssRow {
                m: j + 1,
                c_pool: pool[j] as f64 / n,
                c_conc: conc[j] as f64 / n,
                ratio: if infinite { f64::INFINITY } else { pool[j] as f64 / conc[j] as f64 },
                infinite,
            }
        })
        .collect();
    Ok(EssReport { rows })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_mixture_csv<W: Write>(writer: W, report: &MixtureReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "m",
        "entry_bin",
        "covariate_bin",
        "at_risk_concurrent",
        "at_risk_nonconcurrent",
        "hazard_concurrent",
        "hazard_nonconcurrent",
        "weight",
        "pooled_reconstructed",
        "pooled_direct",
        "discrepancy",
        "evaluable",
        "suspect",
    ])?;
    for c in &report.cells {
        w.write_record([
            c.m.to_string(),
            c.entry_bin.to_string(),
            c.covariate_bin.to_string(),
            c.at_risk_concurrent.to_string(),
            c.at_risk_nonconcurrent.to_string(),
            opt(c.hazard_concurrent),
            opt(c.hazard_nonconcurrent),
            c.weight.to_string(),
            opt(c.pooled_reconstructed),
            c.pooled_direct.to_string(),
            opt(c.discrepancy),
            c.evaluable.to_string(),
            c.suspect.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("mixture csv", e))
}

pub fn write_ess_csv<W: Write>(writer: W, report: &EssReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("ess csv", e))
}
