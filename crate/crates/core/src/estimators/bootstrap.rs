//! Subject-level nonparametric bootstrap.

use rand::Rng;
use rayon::prelude::*;

use crate::data::TrialData;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::stats;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

/// Subject indices of replicate `r`, drawn with replacement.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = substream(seed, &[0xB007, r as u64]);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// The same draw as [`resample_indices`] expressed as per-subject multiplicities.
pub fn resample_weights(n: usize, seed: u64, r: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for i in resample_indices(n, seed, r) {
        w[i] += 1.0;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    /// One standard deviation per estimator output.
    pub se: Vec<f64>,
    pub replicates: usize,
    pub failed: usize,
}

fn summarize(outcomes: Vec<Result<Vec<f64>>>, b: usize) -> Result<BootstrapSummary> {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(b);
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(v) if v.iter().all(|x| x.is_finite()) => kept.push(v),
            Ok(_) => failed += 1,
            Err(e) => {
                log::debug!("bootstrap replicate failed: {e}");
                failed += 1;
            }
        }
    }
    if failed as f64 > MAX_FAILURE_SHARE * b as f64 || kept.len() < 2 {
        return Err(Error::BootstrapInstability { failed, total: b });
    }
    let width = kept[0].len();
    if kept.iter().any(|v| v.len() != width) {
        return Err(Error::Config("bootstrap estimator returned outputs of varying length".into()));
    }
    let se = (0..width)
        .map(|j| stats::sd(&kept.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect();
    Ok(BootstrapSummary {
        se,
        replicates: kept.len(),
        failed,
    })
}

/// Standard error of `estimator` over `b` resamples of whole subjects; each
/// resample is a fresh dataset that the estimator re-expands itself.
pub fn bootstrap_se<F>(data: &TrialData, b: usize, seed: u64, estimator: F) -> Result<BootstrapSummary>
where
    F: Fn(&TrialData) -> Result<f64> + Sync,
{
    if b < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 replicates, got {b}")));
    }
    let n = data.n();
    let outcomes = (0..b)
        .into_par_iter()
        .map(|r| estimator(&data.resample(&resample_indices(n, seed, r))).map(|v| vec![v]))
        .collect();
    summarize(outcomes, b)
}

/// Multi-output variant working on subject multiplicities instead of copies.
pub fn bootstrap_weighted<F>(n: usize, b: usize, seed: u64, estimator: F) -> Result<BootstrapSummary>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if b < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 replicates, got {b}")));
    }
    let outcomes = (0..b)
        .into_par_iter()
        .map(|r| estimator(&resample_weights(n, seed, r)))
        .collect();
    summarize(outcomes, b)
}
