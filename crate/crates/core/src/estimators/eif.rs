//! Efficient influence function of the restricted-mean difference and the
//! one-step estimators built from it.

use serde::{Deserialize, Serialize};

use crate::data::SubjectRecord;
use crate::error::{Error, Result};
use crate::estimands::{product_limit, HazardMatrix, SurvivalKind, SurvivalMatrix};
use crate::hazard::{AvailabilityModel, HazardFit, Propensity};
use crate::stats;

/// Which control population the control-arm nuisances describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Concurrent controls only.
    Oc,
    /// All controls, concurrent or not.
    Ac,
}

/// Fitted nuisance functions consumed by [`compute_eif`]. For [`Variant::Ac`]
/// the control-arm fits are expected to be pooled over availability.
#[derive(Debug, Clone, Copy)]
pub struct DrNuisances<'a> {
    pub event_treated: &'a HazardFit,
    pub event_control: &'a HazardFit,
    pub censor_treated: &'a HazardFit,
    pub censor_control: &'a HazardFit,
    pub propensity: &'a Propensity,
    pub availability: &'a AvailabilityModel,
}

/// Per-`t` influence values for one arm's survival curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveInfluence {
    pub arm: u8,
    /// One-step estimates for `t = 0..=tau`.
    pub estimates: Vec<f64>,
    /// Centered influence values, `influence[t - 1][i]` for `t = 1..=tau`.
    pub influence: Vec<Vec<f64>>,
}

impl CurveInfluence {
    pub fn tau(&self) -> usize {
        self.influence.len()
    }

    pub fn estimate(&self, t: usize) -> Result<f64> {
        self.estimates
            .get(t)
            .copied()
            .ok_or_else(|| Error::Range(format!("curve influence defined through {}, asked for {t}", self.tau())))
    }

    pub fn influence_at(&self, t: usize) -> Result<&[f64]> {
        if t == 0 || t > self.tau() {
            return Err(Error::Range(format!("no influence values at t={t}")));
        }
        Ok(&self.influence[t - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EifTerms {
    pub variant: Variant,
    pub tau: usize,
    /// Sample proportion of concurrent subjects.
    pub p_concurrent: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Summed over `t = 1..tau-1`: `S1(t|X) - S0(t|X)`.
    pub plugin: Vec<f64>,
    /// Summed over `t` and `k <= t`: treated-arm augmentation.
    pub augmentation_treated: Vec<f64>,
    /// Summed over `t` and `k <= t`: control-arm augmentation.
    pub augmentation_control: Vec<f64>,
    pub uncentered: Vec<f64>,
    pub centered: Vec<f64>,
    pub estimate: f64,
    /// Denominators raised to the floor.
    pub truncated: usize,
    pub treated_curve: CurveInfluence,
    pub control_curve: CurveInfluence,
}

impl EifTerms {
    pub fn n(&self) -> usize {
        self.centered.len()
    }

    /// `sd(phi) / sqrt(n)`.
    pub fn standard_error(&self) -> f64 {
        stats::sd(&self.centered) / (self.n() as f64).sqrt()
    }
}

struct ArmNuisance {
    hazard: HazardMatrix,
    surv: SurvivalMatrix,
    cens: SurvivalMatrix,
}

fn arm_nuisance(event: &HazardFit, censor: &HazardFit, subjects: &[SubjectRecord], tau: usize) -> Result<ArmNuisance> {
    let hazard = HazardMatrix::predict(event, subjects, tau)?;
    let surv = product_limit(&hazard, tau, SurvivalKind::Event)?;
    let cens = if tau > 1 {
        product_limit(&HazardMatrix::predict(censor, subjects, tau - 1)?, tau, SurvivalKind::Censoring)?
    } else {
        product_limit(&HazardMatrix::new(1, vec![0.0; subjects.len()])?, 1, SurvivalKind::Censoring)?
    };
    Ok(ArmNuisance { hazard, surv, cens })
}

/// Evaluates the influence function of the restricted-mean difference (summed
/// over `t = 1..tau-1`) together with per-`t` influences of each arm's curve.
///
/// Denominators `P(C >= k | X) S(k | X) pi(X)` below `floor` are raised to it.
pub fn compute_eif(subjects: &[SubjectRecord], nuis: &DrNuisances<'_>, tau: usize, variant: Variant, floor: f64) -> Result<EifTerms> {
    let n = subjects.len();
    if tau < 1 {
        return Err(Error::Range("tau must be at least 1".into()));
    }
    let n_conc = subjects.iter().filter(|s| s.v_tilde).count();
    if n_conc == 0 {
        return Err(Error::EmptyPopulation("no concurrent subjects".into()));
    }
    let p_hat = n_conc as f64 / n as f64;

    let treated = arm_nuisance(nuis.event_treated, nuis.censor_treated, subjects, tau)?;
    let control = arm_nuisance(nuis.event_control, nuis.censor_control, subjects, tau)?;

    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    let mut plugin = Vec::with_capacity(n);
    let mut aug1 = Vec::with_capacity(n);
    let mut aug0 = Vec::with_capacity(n);
    let mut uncentered = Vec::with_capacity(n);
    let mut arm_u = [vec![vec![0.0; n]; tau], vec![vec![0.0; n]; tau]];
    let mut truncated = 0usize;
    let mut coef = vec![0.0; tau];

    for (i, s) in subjects.iter().enumerate() {
        let a = if s.v_tilde { 1.0 / p_hat } else { 0.0 };
        let b = nuis.availability.prob(s)? / p_hat;
        alpha.push(a);
        beta.push(b);

        let arm = if s.treated() { &treated } else { &control };
        let propensity = match (s.treated(), variant) {
            (true, _) | (false, Variant::Oc) => nuis.propensity.prob(s.a, s)?,
            (false, Variant::Ac) => 1.0 - nuis.propensity.prob(1, s)? * nuis.availability.prob(s)?,
        };
        // per-period weighted residuals, accumulated so coef[t-1] = sum_{k<=t}
        let last = s.t_obs.min(tau);
        let mut running = 0.0;
        for k in 1..=tau {
            if k <= last {
                let observed = if k == s.t_obs && s.delta { 1.0 } else { 0.0 };
                let resid = observed - arm.hazard.at(i, k);
                let mut den = arm.cens.at(i, k) * arm.surv.at(i, k) * propensity;
                if den < floor {
                    den = floor;
                    truncated += 1;
                }
                running += resid / den;
            }
            coef[k - 1] = running;
        }
        let weight_own = if s.treated() {
            a
        } else {
            match variant {
                Variant::Oc => a,
                Variant::Ac => b,
            }
        };

        let (mut p_sum, mut aug_sum) = (0.0, 0.0);
        for t in 1..=tau {
            let s1 = treated.surv.at(i, t);
            let s0 = control.surv.at(i, t);
            let q = arm.surv.at(i, t) * coef[t - 1];
            let (q1, q0) = if s.treated() { (q, 0.0) } else { (0.0, q) };
            arm_u[1][t - 1][i] = a * s1 - a * q1;
            arm_u[0][t - 1][i] = a * s0 - weight_own * q0;
            if t < tau {
                p_sum += s1 - s0;
                aug_sum += q;
            }
        }
        plugin.push(p_sum);
        let (g1, g0) = if s.treated() { (aug_sum, 0.0) } else { (0.0, aug_sum) };
        aug1.push(g1);
        aug0.push(g0);
        uncentered.push(a * p_sum - a * g1 + weight_own * g0);
    }

    let estimate = stats::mean(&uncentered);
    let centered = center(&uncentered, &alpha, estimate);
    let curve = |arm: u8, u: &[Vec<f64>]| {
        let mut estimates = vec![1.0];
        let mut influence = Vec::with_capacity(tau);
        for col in u {
            let est = stats::mean(col);
            estimates.push(est);
            influence.push(center(col, &alpha, est));
        }
        CurveInfluence { arm, estimates, influence }
    };
    let treated_curve = curve(1, &arm_u[1]);
    let control_curve = curve(0, &arm_u[0]);

    Ok(EifTerms {
        variant,
        tau,
        p_concurrent: p_hat,
        alpha,
        beta,
        plugin,
        augmentation_treated: aug1,
        augmentation_control: aug0,
        uncentered,
        centered,
        estimate,
        truncated,
        treated_curve,
        control_curve,
    })
}

/// `u_i - alpha_i * psi`; the values average to zero because the alphas sum to `n`.
fn center(u: &[f64], alpha: &[f64], psi: f64) -> Vec<f64> {
    u.iter().zip(alpha).map(|(u, a)| u - a * psi).collect()
}
