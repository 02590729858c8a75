//! Platform-trial data generator, its availability and misspecification
//! variants, and a forward-simulation truth oracle.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SubjectRecord, TrialData};
use crate::error::{Error, Result};
use crate::estimands::{ContrastKind, ThetaCurve, CONCURRENT};
use crate::hazard::{ArmStratum, Conditioning, HazardFit, ModelSpec};
use crate::logistic::expit;
use crate::rng::substream;
use crate::stats;

/// Name of the generated baseline covariate.
pub const COVARIATE: &str = "w";
/// Name of the replacement covariate exposed by [`misspecify`].
pub const REPLACEMENT: &str = "w_star";

// substream tags
const COVARIATES: u64 = 1;
const AVAILABILITY: u64 = 2;
const ASSIGNMENT: u64 = 3;
const OUTCOMES: u64 = 4;
const REPLACEMENT_DRAWS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilityRegime {
    /// Concurrent exactly when entry time is on one side of a threshold.
    Deterministic,
    /// Concurrent with a logistic probability in entry time.
    Stochastic,
}

/// Which entrants are concurrent with the active arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilitySide {
    Early,
    Late,
}

impl AvailabilitySide {
    fn sign(self) -> f64 {
        match self {
            AvailabilitySide::Early => -1.0,
            AvailabilitySide::Late => 1.0,
        }
    }
}

/// Coding of an event and a censoring in the same period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// A tie counts as censored.
    Strict,
    /// A tie counts as an event.
    NonStrict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventCoefficients {
    pub intercept: f64,
    pub arm: f64,
    pub entry: f64,
    pub covariate: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensorCoefficients {
    pub intercept: f64,
    pub entry: f64,
    pub covariate: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub n: usize,
    pub k: usize,
    pub rho: f64,
    pub availability: AvailabilityRegime,
    pub side: AvailabilitySide,
    /// Slope of the availability logit in entry time (stochastic regime).
    pub steepness: f64,
    pub event: EventCoefficients,
    pub censor: CensorCoefficients,
    pub treatment_prob: f64,
    pub tie_rule: TieRule,
    /// Shift of the control event logit for concurrent subjects; nonzero
    /// values make concurrent and non-concurrent controls differ given covariates.
    pub control_shift: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 1500,
            k: 12,
            rho: 0.5,
            availability: AvailabilityRegime::Deterministic,
            side: AvailabilitySide::Early,
            steepness: 1.0,
            event: EventCoefficients {
                intercept: -3.0,
                arm: -1.05,
                entry: 0.2,
                covariate: 1.5,
                time: 0.3,
            },
            censor: CensorCoefficients {
                intercept: -2.7,
                entry: 0.1,
                covariate: 0.15,
                time: 0.15,
            },
            treatment_prob: 0.5,
            tie_rule: TieRule::NonStrict,
            control_shift: 0.0,
            seed: 1,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::Config("n and K must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!("concurrent fraction {} outside (0,1]", self.rho)));
        }
        if !(self.treatment_prob > 0.0 && self.treatment_prob < 1.0) {
            return Err(Error::Config(format!("treatment probability {} outside (0,1)", self.treatment_prob)));
        }
        if self.availability == AvailabilityRegime::Stochastic && !(self.steepness > 0.0) {
            return Err(Error::Config("stochastic availability needs positive steepness".into()));
        }
        Ok(())
    }

    /// Event hazard at period `m` for arm `a`, entry `e`, covariate `w`, availability `v`.
    pub fn event_hazard(&self, m: usize, a: u8, e: f64, w: f64, v: bool) -> f64 {
        let c = &self.event;
        let mut eta = c.intercept + c.arm * a as f64 + c.entry * e + c.covariate * w + c.time * m as f64;
        if a == 0 && v {
            eta += self.control_shift;
        }
        expit(eta)
    }

    pub fn censor_hazard(&self, m: usize, e: f64, w: f64) -> f64 {
        let c = &self.censor;
        expit(c.intercept + c.entry * e + c.covariate * w + c.time * m as f64)
    }
}

/// Threshold `b` such that the share of entries below `b` is the closest
/// achievable to `rho`: the smallest count reaching at least `rho - 1/(2n)`,
/// with `b` halfway between the bracketing order statistics.
pub fn solve_threshold(entries: &[f64], rho: f64) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::EmptyPopulation("no entry times".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("concurrent fraction {rho} outside (0,1]")));
    }
    let mut sorted = entries.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let needed = ((n as f64 * rho - 0.5).ceil().max(0.0) as usize).min(n);
    Ok(match needed {
        0 => sorted[0],
        j if j == n => sorted[n - 1] + 1.0,
        j => 0.5 * (sorted[j - 1] + sorted[j]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticAvailability {
    pub intercept: f64,
    pub probabilities: Vec<f64>,
    pub draws: Vec<bool>,
}

/// Intercept `c` with `mean(expit(c + steepness * x)) = rho` over the sample.
pub fn calibrate_intercept(x: &[f64], rho: f64, steepness: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyPopulation("no entry times".into()));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Calibration(format!("fraction {rho} not reachable by a logistic availability model")));
    }
    let gap = |c: f64| stats::mean(&x.iter().map(|v| expit(c + steepness * v)).collect::<Vec<_>>()) - rho;
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut widen = 0;
    while gap(lo) > 0.0 || gap(hi) < 0.0 {
        lo *= 2.0;
        hi *= 2.0;
        widen += 1;
        if widen > 60 {
            return Err(Error::Calibration(format!("no intercept brackets fraction {rho}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    if gap(c).abs() > 1e-4 {
        return Err(Error::Calibration(format!("calibrated fraction misses {rho} by {:e}", gap(c))));
    }
    Ok(c)
}

/// Availability drawn as `Bernoulli(expit(c + steepness * x))` with `c` calibrated
/// so the expected concurrent share equals `rho`.
pub fn gen_stochastic_availability(x: &[f64], rho: f64, steepness: f64, seed: u64) -> Result<StochasticAvailability> {
    if !(steepness > 0.0) {
        return Err(Error::Config(format!("steepness {steepness} must be positive")));
    }
    let intercept = calibrate_intercept(x, rho, steepness)?;
    let probabilities: Vec<f64> = x.iter().map(|v| expit(intercept + steepness * v)).collect();
    let draws = probabilities
        .iter()
        .enumerate()
        .map(|(i, &p)| substream(seed, &[AVAILABILITY, i as u64]).gen::<f64>() < p)
        .collect();
    Ok(StochasticAvailability {
        intercept,
        probabilities,
        draws,
    })
}

/// Entry times and covariates for `n` subjects, centered as in the generator.
fn baseline(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut e: Vec<f64> = Vec::with_capacity(n);
    let mut eps: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = substream(seed, &[COVARIATES, i as u64]);
        e.push(StandardNormal.sample(&mut rng));
        eps.push(StandardNormal.sample(&mut rng));
    }
    let kappa = stats::mean(&e.iter().map(|v| 0.8 * v).collect::<Vec<_>>());
    let w = e.iter().zip(&eps).map(|(e, x)| -kappa + 0.8 * e + x).collect();
    (e, w)
}

/// Concurrency flags and, in the stochastic regime, their probabilities.
fn availability(cfg: &DgpConfig, e: &[f64]) -> Result<(Vec<bool>, Option<Vec<f64>>)> {
    let signed: Vec<f64> = e.iter().map(|v| cfg.side.sign() * v).collect();
    match cfg.availability {
        AvailabilityRegime::Deterministic => {
            // early side: V = 1(E < b); late side: V = 1(-E < b')
            let b = solve_threshold(&signed.iter().map(|v| -v).collect::<Vec<_>>(), cfg.rho)?;
            Ok((signed.iter().map(|v| -v < b).collect(), None))
        }
        AvailabilityRegime::Stochastic => {
            let s = gen_stochastic_availability(&signed, cfg.rho, cfg.steepness, cfg.seed)?;
            Ok((s.draws, Some(s.probabilities)))
        }
    }
}

fn first_success(rng: &mut impl Rng, k: usize, p: impl Fn(usize) -> f64) -> Option<usize> {
    // all k uniforms are consumed so the stream position never depends on the outcome
    let mut first = None;
    for m in 1..=k {
        let u: f64 = rng.gen();
        if first.is_none() && u < p(m) {
            first = Some(m);
        }
    }
    first
}

/// Generates one dataset from `cfg` (seeded by `cfg.seed`).
pub fn gen_trial(cfg: &DgpConfig) -> Result<TrialData> {
    cfg.validate()?;
    let n = cfg.n;
    let (e, w) = baseline(cfg.seed, n);
    let (v, p_avail) = availability(cfg, &e)?;
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let a = if v[i] && substream(cfg.seed, &[ASSIGNMENT, i as u64]).gen::<f64>() < cfg.treatment_prob {
            1u8
        } else {
            0u8
        };
        let mut rng = substream(cfg.seed, &[OUTCOMES, i as u64]);
        let t = first_success(&mut rng, cfg.k, |m| cfg.event_hazard(m, a, e[i], w[i], v[i]));
        let c = first_success(&mut rng, cfg.k, |m| cfg.censor_hazard(m, e[i], w[i]));
        let (t_obs, delta) = match (t, c) {
            (Some(t), Some(c)) => match cfg.tie_rule {
                TieRule::Strict => (t.min(c), t < c),
                TieRule::NonStrict => (t.min(c), t <= c),
            },
            (Some(t), None) => (t, true),
            (None, Some(c)) => (c, false),
            (None, None) => (cfg.k, false),
        };
        subjects.push(SubjectRecord {
            id: format!("s{i}"),
            w: vec![w[i]],
            e: e[i],
            v_tilde: v[i],
            a,
            t_obs,
            delta,
            p_avail: p_avail.as_ref().map(|p| p[i]),
        });
    }
    TrialData::new(cfg.k, vec![COVARIATE.to_string()], subjects)
}

/// Adds the replacement covariate `w_star ~ Exp(rate = lambda)` drawn from its
/// own substream; outcomes and the original columns are untouched. Pair with
/// `NuisanceSpec::misspecified("w", "w_star")` to hide entry time and `w`.
pub fn misspecify(data: &TrialData, lambda: f64, seed: u64) -> Result<TrialData> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("rate {lambda} must be positive")));
    }
    let dist = Exp::new(lambda).map_err(|_| Error::Config(format!("rate {lambda} must be positive")))?;
    let draws: Vec<f64> = (0..data.n())
        .map(|i| dist.sample(&mut substream(seed, &[REPLACEMENT_DRAWS, i as u64])))
        .collect();
    data.with_extra_covariate(REPLACEMENT, &draws)
}

/// The generating hazards written as fitted models over `(E, w)`, for use as
/// known nuisances. The control event hazard is that of concurrent controls.
#[derive(Debug, Clone)]
pub struct OracleHazards {
    pub event_treated: HazardFit,
    pub event_control: HazardFit,
    pub censor: HazardFit,
}

pub fn oracle_hazards(cfg: &DgpConfig, tau: usize) -> Result<OracleHazards> {
    let names = vec![COVARIATE.to_string()];
    let terms = ModelSpec::default_terms(&[COVARIATE]);
    let ev = &cfg.event;
    let event = |arm: ArmStratum, shift: f64| {
        let coefs = (1..=tau)
            .map(|m| vec![ev.intercept + shift + ev.time * m as f64, ev.entry, ev.covariate])
            .collect();
        HazardFit::from_coefficients(
            ModelSpec::event(arm, Conditioning::ConcurrentOnly, terms.clone()).with_horizon(tau),
            &names,
            coefs,
        )
    };
    let c = &cfg.censor;
    let censor = HazardFit::from_coefficients(
        ModelSpec::censor(ArmStratum::Both, Conditioning::Pooled, terms.clone()).with_horizon(cfg.k),
        &names,
        (1..=cfg.k).map(|m| vec![c.intercept + c.time * m as f64, c.entry, c.covariate]).collect(),
    )?;
    Ok(OracleHazards {
        event_treated: event(ArmStratum::Treated, ev.arm)?,
        event_control: event(ArmStratum::Control, cfg.control_shift)?,
        censor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub tau: usize,
    pub reps: usize,
    /// Concurrent-population survival curves, `t = 0..=tau`, averaged over
    /// exact conditional survival products.
    pub treated: ThetaCurve,
    pub control: ThetaCurve,
    /// `sum_{t<tau} theta1(t) - theta0(t)` from the curves above.
    pub drmst: f64,
    pub drmst_se: f64,
    /// `E[min(T1, tau) - min(T0, tau)]` from paired counterfactual draws.
    pub drmst_min_diff: f64,
    pub drmst_min_diff_se: f64,
    /// Restricted-mean sum over empirical survival indicators of the same draws.
    pub drmst_draw_sum: f64,
}

impl TruthTable {
    pub fn contrast(&self, kind: ContrastKind, t: usize) -> Result<f64> {
        crate::estimands::contrast(&self.treated, &self.control, t, kind)
    }
}

struct OracleChunk {
    weight: f64,
    weight_sq: f64,
    surv: [Vec<f64>; 2],
    diff_sum: f64,
    diff_sq: f64,
    drawn: usize,
    min_diff: f64,
    min_diff_sq: f64,
    above: [Vec<f64>; 2],
}

/// Forward-simulates counterfactual survival for `reps` subjects with censoring
/// switched off. Both arms reuse the same uniforms per subject.
pub fn truth_oracle(cfg: &DgpConfig, tau: usize, reps: usize) -> Result<TruthTable> {
    cfg.validate()?;
    if reps < 10_000 {
        return Err(Error::Config(format!("truth oracle needs at least 10^4 draws, got {reps}")));
    }
    if tau == 0 || tau > cfg.k {
        return Err(Error::Config(format!("tau {tau} outside 1..={}", cfg.k)));
    }
    let oracle_cfg = DgpConfig { n: reps, ..cfg.clone() };
    let (e, w) = baseline(oracle_cfg.seed, reps);
    let (v, p) = availability(&oracle_cfg, &e)?;
    // target weight: availability probability when known, else the indicator
    let weight: Vec<f64> = match &p {
        Some(p) => p.clone(),
        None => v.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
    };

    const CHUNK: usize = 8192;
    let chunks: Vec<OracleChunk> = (0..reps.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = OracleChunk {
                weight: 0.0,
                weight_sq: 0.0,
                surv: [vec![0.0; tau], vec![0.0; tau]],
                diff_sum: 0.0,
                diff_sq: 0.0,
                drawn: 0,
                min_diff: 0.0,
                min_diff_sq: 0.0,
                above: [vec![0.0; tau], vec![0.0; tau]],
            };
            let mut s_row = [vec![0.0; tau], vec![0.0; tau]];
            for i in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                let wi = weight[i];
                let mut rng = substream(oracle_cfg.seed, &[OUTCOMES, i as u64]);
                let u: Vec<f64> = (0..cfg.k).map(|_| rng.gen()).collect();
                let mut first = [cfg.k + 1; 2];
                for arm in 0..2u8 {
                    let mut s = 1.0;
                    for m in 1..=tau {
                        let h = cfg.event_hazard(m, arm, e[i], w[i], true);
                        s *= 1.0 - h;
                        s_row[arm as usize][m - 1] = s;
                        if first[arm as usize] > cfg.k && u[m - 1] < h {
                            first[arm as usize] = m;
                        }
                    }
                }
                if wi > 0.0 {
                    let d: f64 = (0..tau - 1).map(|j| s_row[1][j] - s_row[0][j]).sum();
                    out.weight += wi;
                    out.weight_sq += wi * wi;
                    out.diff_sum += wi * d;
                    out.diff_sq += wi * d * d;
                    for arm in 0..2 {
                        for j in 0..tau {
                            out.surv[arm][j] += wi * s_row[arm][j];
                        }
                    }
                }
                if v[i] {
                    let md = first[1].min(tau) as f64 - first[0].min(tau) as f64;
                    out.drawn += 1;
                    out.min_diff += md;
                    out.min_diff_sq += md * md;
                    for arm in 0..2 {
                        for t in 1..=tau {
                            if first[arm] > t {
                                out.above[arm][t - 1] += 1.0;
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();

    let total_w = stats::sum(chunks.iter().map(|c| c.weight));
    let total_w2 = stats::sum(chunks.iter().map(|c| c.weight_sq));
    let drawn: usize = chunks.iter().map(|c| c.drawn).sum();
    if total_w == 0.0 || drawn == 0 {
        return Err(Error::EmptyPopulation("oracle sample has no concurrent subjects".into()));
    }
    let curve = |arm: usize| {
        let tail: Vec<f64> = (0..tau)
            .map(|j| stats::sum(chunks.iter().map(|c| c.surv[arm][j])) / total_w)
            .collect();
        ThetaCurve::from_values(arm as u8, &tail, CONCURRENT, "truth oracle")
    };
    let (treated, control) = (curve(1), curve(0));
    let drmst: f64 = (1..tau).map(|t| treated.values[t] - control.values[t]).sum();
    // weighted-mean variance with the Kish effective sample size
    let mean_d = stats::sum(chunks.iter().map(|c| c.diff_sum)) / total_w;
    let var_d = (stats::sum(chunks.iter().map(|c| c.diff_sq)) / total_w - mean_d * mean_d).max(0.0);
    let n_eff = total_w * total_w / total_w2;
    let md = stats::sum(chunks.iter().map(|c| c.min_diff)) / drawn as f64;
    let md_var = (stats::sum(chunks.iter().map(|c| c.min_diff_sq)) / drawn as f64 - md * md).max(0.0);
    let draw_sum: f64 = (1..tau)
        .map(|t| {
            let a1 = stats::sum(chunks.iter().map(|c| c.above[1][t - 1]));
            let a0 = stats::sum(chunks.iter().map(|c| c.above[0][t - 1]));
            (a1 - a0) / drawn as f64
        })
        .sum();

    Ok(TruthTable {
        tau,
        reps,
        treated,
        control,
        drmst,
        drmst_se: (var_d / n_eff).sqrt(),
        drmst_min_diff: md,
        drmst_min_diff_se: (md_var / drawn as f64).sqrt(),
        drmst_draw_sum: draw_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn threshold_hits_the_target_share(
            entries in prop::collection::hash_set(-1000i32..1000, 1..200),
            rho in 0.01f64..=1.0,
        ) {
            let entries: Vec<f64> = entries.into_iter().map(|e| e as f64 / 10.0).collect();
            let b = solve_threshold(&entries, rho).unwrap();
            let n = entries.len() as f64;
            let share = entries.iter().filter(|&&e| e < b).count() as f64 / n;
            prop_assert!((share - rho).abs() <= 0.5 / n + 1e-12, "share {} rho {}", share, rho);
        }

        #[test]
        fn oracle_hazards_are_probabilities(m in 1usize..=8, e in -4.0f64..4.0, w in -4.0f64..4.0, shift in -2.0f64..2.0) {
            let cfg = DgpConfig { control_shift: shift, ..Default::default() };
            let h = oracle_hazards(&cfg, 8).unwrap();
            let s = SubjectRecord { id: "x".into(), w: vec![w], e, v_tilde: true, a: 0, t_obs: 1, delta: false, p_avail: None };
            for fit in [&h.event_treated, &h.event_control, &h.censor] {
                let p = fit.predict(m, &s).unwrap();
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }
    }

    #[test]
    fn threshold_examples() {
        let sym = [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0];
        assert_eq!(solve_threshold(&sym, 0.5).unwrap(), 0.0);
        let b = solve_threshold(&sym, 1.0).unwrap();
        assert!(sym.iter().all(|&e| e < b));
        assert!(solve_threshold(&[], 0.5).is_err());
        assert!(solve_threshold(&sym, 1.2).is_err());
        assert!(solve_threshold(&sym, 0.0).is_err());
    }

    #[test]
    fn threshold_fraction_within_one_over_n() {
        let (e, _) = baseline(11, 1500);
        for rho in [0.1, 0.3, 0.55, 0.9] {
            let b = solve_threshold(&e, rho).unwrap();
            let frac = e.iter().filter(|&&x| x < b).count() as f64 / 1500.0;
            assert!((frac - rho).abs() <= 1.0 / 1500.0, "rho {rho} frac {frac}");
        }
    }

    #[test]
    fn median_threshold_at_half() {
        let cfg = DgpConfig { rho: 0.5, n: 1000, ..Default::default() };
        let data = gen_trial(&cfg).unwrap();
        let mut e: Vec<f64> = data.subjects.iter().map(|s| s.e).collect();
        e.sort_by(f64::total_cmp);
        let median = 0.5 * (e[499] + e[500]);
        assert_eq!(solve_threshold(&e, 0.5).unwrap(), median);
        assert!(data.subjects.iter().all(|s| s.v_tilde == (s.e < median)));
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let cfg = DgpConfig { n: 300, seed: 5, ..Default::default() };
        let a = gen_trial(&cfg).unwrap();
        let b = gen_trial(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.subjects.iter().all(|s| s.v_tilde || s.a == 0));
        let c = gen_trial(&DgpConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unreachable_rho_is_a_config_error() {
        let cfg = DgpConfig { rho: 1.5, ..Default::default() };
        assert!(matches!(gen_trial(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn stochastic_availability_calibration() {
        let (e, _) = baseline(3, 100_000);
        let s = gen_stochastic_availability(&e, 0.3, 1.0, 9).unwrap();
        assert_abs_diff_eq!(stats::mean(&s.probabilities), 0.3, epsilon = 1e-4);
        let frac = s.draws.iter().filter(|&&v| v).count() as f64 / 1e5;
        assert!((frac - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / 1e5).sqrt());
        // probabilities increase with the signed entry time
        let mut pairs: Vec<(f64, f64)> = e.iter().copied().zip(s.probabilities.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        // nearly flat slope leaves the probability near rho everywhere
        let flat = gen_stochastic_availability(&e, 0.3, 1e-9, 9).unwrap();
        assert!(flat.probabilities.iter().all(|p| (p - 0.3).abs() < 1e-6));
        assert!(gen_stochastic_availability(&e, 1.0, 1.0, 9).is_err());
    }

    #[test]
    fn replacement_covariate_leaves_outcomes() {
        let data = gen_trial(&DgpConfig { n: 20_000, ..Default::default() }).unwrap();
        let view = misspecify(&data, 2.0, 4).unwrap();
        let w_star: Vec<f64> = view.subjects.iter().map(|s| s.w[1]).collect();
        assert!((stats::mean(&w_star) - 0.5).abs() < 0.02);
        for (a, b) in data.subjects.iter().zip(&view.subjects) {
            assert_eq!((a.t_obs, a.delta, a.a, a.v_tilde, a.e, a.w[0]), (b.t_obs, b.delta, b.a, b.v_tilde, b.e, b.w[0]));
        }
        assert!(misspecify(&data, 0.0, 4).is_err());
    }

    #[test]
    fn zero_shift_matches_default_generator() {
        let base = DgpConfig { n: 500, seed: 21, ..Default::default() };
        let shifted = DgpConfig { control_shift: 0.0, ..base.clone() };
        assert_eq!(gen_trial(&base).unwrap(), gen_trial(&shifted).unwrap());
        let on = DgpConfig { control_shift: 1.0, ..base.clone() };
        assert_ne!(gen_trial(&base).unwrap(), gen_trial(&on).unwrap());
    }

    #[test]
    fn oracle_hazards_reproduce_generator() {
        let cfg = DgpConfig { control_shift: 0.4, ..Default::default() };
        let h = oracle_hazards(&cfg, 8).unwrap();
        let data = gen_trial(&DgpConfig { n: 50, ..cfg.clone() }).unwrap();
        for s in &data.subjects {
            for m in 1..=8 {
                let (e, w) = (s.e, s.w[0]);
                assert_abs_diff_eq!(h.event_treated.predict(m, s).unwrap(), cfg.event_hazard(m, 1, e, w, true), epsilon = 1e-15);
                assert_abs_diff_eq!(h.event_control.predict(m, s).unwrap(), cfg.event_hazard(m, 0, e, w, true), epsilon = 1e-15);
                assert_abs_diff_eq!(h.censor.predict(m, s).unwrap(), cfg.censor_hazard(m, e, w), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn oracle_null_effect_and_identity() {
        let mut cfg = DgpConfig::default();
        cfg.event.arm = 0.0;
        let t = truth_oracle(&cfg, 8, 20_000).unwrap();
        assert_abs_diff_eq!(t.drmst, 0.0, epsilon = 1e-12);
        assert!(t.drmst_min_diff.abs() < 3.0 * t.drmst_min_diff_se.max(1e-12));
        assert_eq!(t.treated.values[0], 1.0);
        let t = truth_oracle(&DgpConfig::default(), 8, 20_000).unwrap();
        // the min-difference and the indicator sum are the same average
        assert_abs_diff_eq!(t.drmst_min_diff, t.drmst_draw_sum, epsilon = 1e-9);
        assert!(t.drmst > 0.0);
        assert!(t.treated.values.windows(2).all(|w| w[1] <= w[0]));
        assert!(truth_oracle(&cfg, 8, 100).is_err());
    }
}
