//! Delta-method contrasts and pointwise bands from per-`t` influence values.

use serde::{Deserialize, Serialize};

use super::eif::CurveInfluence;
use super::report::{EstimateReport, Estimand, Method, ReportMeta, SeSource, Z95};
use crate::error::{Error, Result};
use crate::estimands::ContrastKind;
use crate::stats;

/// Contrast of the two arm curves at `t` with a first-order delta-method SE
/// from the joint influence-based covariance of the two curve estimates.
pub fn delta_ratio(
    treated: &CurveInfluence,
    control: &CurveInfluence,
    t: usize,
    kind: ContrastKind,
    method: Method,
    meta: ReportMeta,
) -> Result<EstimateReport> {
    let (th1, th0) = (treated.estimate(t)?, control.estimate(t)?);
    let (if1, if0) = (treated.influence_at(t)?, control.influence_at(t)?);
    if if1.len() != if0.len() {
        return Err(Error::Range("arm influence vectors differ in length".into()));
    }
    let n = if1.len() as f64;
    let cov = [
        stats::variance(if1) / n,
        stats::covariance(if1, if0) / n,
        stats::variance(if0) / n,
    ];
    delta_from_moments(th1, th0, cov, t, kind, method, meta)
}

/// As [`delta_ratio`] with the covariance `[var1, cov10, var0]` supplied directly.
pub fn delta_from_moments(
    theta1: f64,
    theta0: f64,
    cov: [f64; 3],
    t: usize,
    kind: ContrastKind,
    method: Method,
    meta: ReportMeta,
) -> Result<EstimateReport> {
    let estimate = kind.evaluate(theta1, theta0)?;
    let (g1, g0) = kind.gradient(theta1, theta0)?;
    let var = g1 * g1 * cov[0] + 2.0 * g1 * g0 * cov[1] + g0 * g0 * cov[2];
    EstimateReport::new(
        Estimand::Contrast { contrast: kind, t },
        method,
        estimate,
        var.max(0.0).sqrt(),
        SeSource::DeltaMethod,
        meta,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub t: usize,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Wald interval for the curve at each `t = 1..=tau` separately.
pub fn pointwise_bands(curve: &CurveInfluence) -> Vec<Band> {
    curve
        .influence
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let t = j + 1;
            let estimate = curve.estimates[t];
            let se = stats::sd(col) / (col.len() as f64).sqrt();
            Band {
                t,
                estimate,
                se,
                lo: estimate - Z95 * se,
                hi: estimate + Z95 * se,
            }
        })
        .collect()
}
