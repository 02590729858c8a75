use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimands::ContrastKind;

/// Normal quantile used for all 95% Wald intervals.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "OR_oc")]
    OrOc,
    #[serde(rename = "OR_ac")]
    OrAc,
    #[serde(rename = "DR_oc")]
    DrOc,
    #[serde(rename = "DR_ac")]
    DrAc,
    #[serde(rename = "naive")]
    Naive,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::OrOc, Method::OrAc, Method::DrOc, Method::DrAc, Method::Naive];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::OrOc => "OR_oc",
            Method::OrAc => "OR_ac",
            Method::DrOc => "DR_oc",
            Method::DrAc => "DR_ac",
            Method::Naive => "naive",
        }
    }

    pub fn is_doubly_robust(self) -> bool {
        matches!(self, Method::DrOc | Method::DrAc)
    }

    /// Control-arm nuisances pool concurrent and non-concurrent controls.
    pub fn pools_controls(self) -> bool {
        matches!(self, Method::OrAc | Method::DrAc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected OR_oc, OR_ac, DR_oc, DR_ac, naive)")))
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty method list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimand {
    Drmst { tau: usize },
    Contrast { contrast: ContrastKind, t: usize },
}

impl Estimand {
    pub fn null_value(&self) -> f64 {
        match self {
            Estimand::Drmst { .. } => 0.0,
            Estimand::Contrast { contrast, .. } => contrast.null_value(),
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimand::Drmst { tau } => write!(f, "dRMST(tau={tau})"),
            Estimand::Contrast { contrast, t } => write!(f, "{contrast}(t={t})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeSource {
    Eif,
    Bootstrap,
    DeltaMethod,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n: usize,
    pub n_concurrent: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Influence denominators raised to the truncation floor.
    pub truncated: usize,
    /// Some hazard fit fell back to a linear time covariate.
    pub fallback: bool,
    pub bootstrap_replicates: usize,
    pub bootstrap_failed: usize,
    /// Mean gap between pooled and concurrent control censoring hazards.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censoring_pool_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimand: Estimand,
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p_value: f64,
    pub se_source: SeSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence: Option<Vec<f64>>,
    pub meta: ReportMeta,
}

/// Two-sided Wald interval and p-value against `null`.
pub fn wald(estimate: f64, se: f64, null: f64) -> (f64, f64, f64) {
    let lo = estimate - Z95 * se;
    let hi = estimate + Z95 * se;
    let p = if se > 0.0 {
        let z = ((estimate - null) / se).abs();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        2.0 * (1.0 - normal.cdf(z))
    } else if estimate == null {
        1.0
    } else {
        0.0
    };
    (lo, hi, p)
}

impl EstimateReport {
    pub fn new(estimand: Estimand, method: Method, estimate: f64, se: f64, se_source: SeSource, meta: ReportMeta) -> Result<Self> {
        if !(se >= 0.0) {
            return Err(Error::DivisionDomain(format!("standard error {se} is not a non-negative number")));
        }
        let (ci_lo, ci_hi, p_value) = wald(estimate, se, estimand.null_value());
        Ok(Self {
            estimand,
            method,
            estimate,
            se,
            ci_lo,
            ci_hi,
            p_value,
            se_source,
            influence: None,
            meta,
        })
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lo <= truth && truth <= self.ci_hi
    }

    pub fn to_row(&self, scenario: &str, truth: Option<f64>) -> EstimateRow {
        EstimateRow {
            method: self.method,
            rho: self.meta.rho,
            scenario: scenario.to_string(),
            estimate: self.estimate,
            se: self.se,
            ci_lo: self.ci_lo,
            ci_hi: self.ci_hi,
            covered: truth.map(|t| self.covers(t)),
            seed: self.meta.seed,
        }
    }
}

/// Flat per-estimate CSV record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub method: Method,
    pub rho: Option<f64>,
    pub scenario: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub covered: Option<bool>,
    pub seed: Option<u64>,
}

pub const ESTIMATE_ROW_HEADER: &str = "method,rho,scenario,estimate,se,ci_lo,ci_hi,covered,seed";

pub fn write_estimate_rows<W: std::io::Write>(writer: W, rows: &[EstimateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(ESTIMATE_ROW_HEADER.split(','))?;
    }
    w.flush().map_err(|e| Error::io("<estimate rows>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wald_interval_and_p_value() {
        let (lo, hi, p) = wald(1.96, 1.0, 0.0);
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 3.92, epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.049996, epsilon = 1e-5);
        assert_eq!(wald(0.0, 0.0, 0.0).2, 1.0);
        let (_, _, p_ratio) = wald(1.0, 0.1, 1.0);
        assert_abs_diff_eq!(p_ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert_eq!(parse_methods("DR_oc, naive,DR_oc").unwrap(), vec![Method::DrOc, Method::Naive]);
        assert!(parse_methods("OR_xx").is_err());
    }

    #[test]
    fn csv_row_header() {
        let meta = ReportMeta {
            rho: Some(0.5),
            seed: Some(9),
            ..Default::default()
        };
        let r = EstimateReport::new(Estimand::Drmst { tau: 8 }, Method::DrOc, 0.3, 0.1, SeSource::Eif, meta).unwrap();
        let mut buf = Vec::new();
        write_estimate_rows(&mut buf, &[r.to_row("correct", Some(0.35))]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), ESTIMATE_ROW_HEADER);
        assert!(lines.next().unwrap().starts_with("DR_oc,0.5,correct,0.3,0.1,"));
        assert!(EstimateReport::new(Estimand::Drmst { tau: 8 }, Method::DrOc, 0.3, f64::NAN, SeSource::Eif, ReportMeta::default()).is_err());
    }
}
