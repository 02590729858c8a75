//! Survival curves from hazards, the concurrent-population survival curve,
//! restricted-mean differences and ratio/difference contrasts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SubjectRecord;
use crate::error::{Error, Result};
use crate::hazard::HazardFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalKind {
    /// `P(T > t | X)`, product through `t`.
    Event,
    /// `P(C >= t | X)`, product through `t - 1`.
    Censoring,
}

impl SurvivalKind {
    pub fn lag(self) -> usize {
        match self {
            SurvivalKind::Event => 0,
            SurvivalKind::Censoring => 1,
        }
    }
}

/// Dense `n x horizon` hazard values, row per subject, column `m - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardMatrix {
    pub horizon: usize,
    pub values: Vec<f64>,
}

impl HazardMatrix {
    pub fn new(horizon: usize, values: Vec<f64>) -> Result<Self> {
        if horizon == 0 || values.len() % horizon != 0 {
            return Err(Error::Range(format!(
                "{} hazard values do not form rows of length {horizon}",
                values.len()
            )));
        }
        Ok(Self { horizon, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let horizon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(Error::Range("ragged hazard rows".into()));
        }
        Self::new(horizon, rows.concat())
    }

    /// Evaluates `fit` for every subject at periods `1..=horizon`.
    pub fn predict(fit: &HazardFit, subjects: &[SubjectRecord], horizon: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(subjects.len() * horizon);
        for s in subjects {
            for m in 1..=horizon {
                values.push(fit.predict(m, s)?);
            }
        }
        Self::new(horizon, values)
    }

    pub fn nrows(&self) -> usize {
        if self.horizon == 0 {
            0
        } else {
            self.values.len() / self.horizon
        }
    }

    /// Hazard of subject `i` at period `m` (1-based).
    pub fn at(&self, i: usize, m: usize) -> f64 {
        self.values[i * self.horizon + m - 1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.horizon..(i + 1) * self.horizon]
    }
}

/// Per-subject running products of one minus a hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalMatrix {
    pub kind: SurvivalKind,
    pub horizon: usize,
    /// Row-major, column `t - 1` for `t = 1..=horizon`.
    values: Vec<f64>,
}

impl SurvivalMatrix {
    pub fn nrows(&self) -> usize {
        if self.horizon == 0 {
            0
        } else {
            self.values.len() / self.horizon
        }
    }

    /// Value for subject `i` at `t` in `0..=horizon`; column 0 is the empty product.
    pub fn at(&self, i: usize, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.values[i * self.horizon + t - 1]
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.horizon..(i + 1) * self.horizon]
    }
}

/// Running products through `t` (`lag = 0`) or `t - 1` (`lag = 1`) for `t = 1..=horizon`.
pub fn product_limit(hazards: &HazardMatrix, horizon: usize, kind: SurvivalKind) -> Result<SurvivalMatrix> {
    let lag = kind.lag();
    let needed = horizon.saturating_sub(lag);
    if needed > hazards.horizon {
        return Err(Error::Range(format!(
            "horizon {horizon} needs {needed} hazard periods, have {}",
            hazards.horizon
        )));
    }
    let n = hazards.nrows();
    let mut values = Vec::with_capacity(n * horizon);
    for i in 0..n {
        let mut running = 1.0;
        for t in 1..=horizon {
            if t > lag {
                let m = t - lag;
                let h = hazards.at(i, m);
                if !(0.0..1.0).contains(&h) {
                    return Err(Error::DegenerateHazard {
                        subject: i,
                        period: m,
                        value: h,
                    });
                }
                running *= 1.0 - h;
            }
            values.push(running);
        }
    }
    Ok(SurvivalMatrix { kind, horizon, values })
}

/// Estimated survival curve of one arm in a target population, `t = 0..=tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaCurve {
    pub arm: u8,
    pub values: Vec<f64>,
    pub population: String,
    /// Description of the nuisance model that produced the curve.
    pub source: String,
}

impl ThetaCurve {
    pub fn tau(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn at(&self, t: usize) -> Result<f64> {
        self.values
            .get(t)
            .copied()
            .ok_or_else(|| Error::Range(format!("curve defined through {}, asked for {t}", self.tau())))
    }

    /// A curve from given values at `t = 1..`; the value at `0` is fixed at one.
    pub fn from_values(arm: u8, tail: &[f64], population: &str, source: &str) -> Self {
        let mut values = Vec::with_capacity(tail.len() + 1);
        values.push(1.0);
        values.extend_from_slice(tail);
        Self {
            arm,
            values,
            population: population.into(),
            source: source.into(),
        }
    }
}

pub const CONCURRENT: &str = "concurrent";

/// Mean survival over concurrent subjects, optionally weighted by subject multiplicity.
pub fn theta_plugin(surv: &SurvivalMatrix, concurrent: &[bool], arm: u8, weights: Option<&[f64]>) -> Result<ThetaCurve> {
    if concurrent.len() != surv.nrows() {
        return Err(Error::Range(format!(
            "{} concurrency flags for {} survival rows",
            concurrent.len(),
            surv.nrows()
        )));
    }
    let mut sums = vec![0.0; surv.horizon];
    let mut total = 0.0;
    for (i, &c) in concurrent.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if !c || w == 0.0 {
            continue;
        }
        total += w;
        for (acc, v) in sums.iter_mut().zip(surv.row(i)) {
            *acc += w * v;
        }
    }
    if total == 0.0 {
        return Err(Error::EmptyPopulation("no concurrent subjects to average over".into()));
    }
    let tail: Vec<f64> = sums.iter().map(|s| s / total).collect();
    Ok(ThetaCurve::from_values(arm, &tail, CONCURRENT, ""))
}

/// Sum of `theta1(t) - theta0(t)` over `t = 1..tau-1`.
pub fn drmst(theta1: &ThetaCurve, theta0: &ThetaCurve, tau: usize) -> Result<f64> {
    if theta1.population != theta0.population {
        return Err(Error::Config(format!(
            "curves target different populations: {} vs {}",
            theta1.population, theta0.population
        )));
    }
    if tau == 0 {
        return Err(Error::Range("tau must be at least 1".into()));
    }
    let last = tau - 1;
    if theta1.tau() < last || theta0.tau() < last {
        return Err(Error::Range(format!(
            "curves defined through {} and {}, need {last}",
            theta1.tau(),
            theta0.tau()
        )));
    }
    Ok((1..tau).map(|t| theta1.values[t] - theta0.values[t]).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastKind {
    /// `theta0 / theta1`: above one when treatment moves subjects out of the
    /// event-free state faster.
    RecoveryRatio,
    SurvivalRatio,
    RiskDifference,
    RiskRatio,
}

impl ContrastKind {
    pub const ALL: [ContrastKind; 4] = [
        ContrastKind::RecoveryRatio,
        ContrastKind::SurvivalRatio,
        ContrastKind::RiskDifference,
        ContrastKind::RiskRatio,
    ];

    pub fn evaluate(self, theta1: f64, theta0: f64) -> Result<f64> {
        let ratio = |num: f64, den: f64| {
            if den == 0.0 {
                Err(Error::DivisionDomain(format!("{self} with zero denominator")))
            } else {
                Ok(num / den)
            }
        };
        match self {
            ContrastKind::RecoveryRatio => ratio(theta0, theta1),
            ContrastKind::SurvivalRatio => ratio(theta1, theta0),
            ContrastKind::RiskDifference => Ok((1.0 - theta1) - (1.0 - theta0)),
            ContrastKind::RiskRatio => ratio(1.0 - theta1, 1.0 - theta0),
        }
    }

    /// Partial derivatives with respect to `(theta1, theta0)`.
    pub fn gradient(self, theta1: f64, theta0: f64) -> Result<(f64, f64)> {
        let nonzero = |d: f64| {
            if d == 0.0 {
                Err(Error::DivisionDomain(format!("{self} with zero denominator")))
            } else {
                Ok(d)
            }
        };
        Ok(match self {
            ContrastKind::RecoveryRatio => {
                let d = nonzero(theta1)?;
                (-theta0 / (d * d), 1.0 / d)
            }
            ContrastKind::SurvivalRatio => {
                let d = nonzero(theta0)?;
                (1.0 / d, -theta1 / (d * d))
            }
            ContrastKind::RiskDifference => (-1.0, 1.0),
            ContrastKind::RiskRatio => {
                let d = nonzero(1.0 - theta0)?;
                (-1.0 / d, (1.0 - theta1) / (d * d))
            }
        })
    }

    /// Value of the contrast under no treatment effect.
    pub fn null_value(self) -> f64 {
        match self {
            ContrastKind::RiskDifference => 0.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for ContrastKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContrastKind::RecoveryRatio => "recovery-ratio",
            ContrastKind::SurvivalRatio => "survival-ratio",
            ContrastKind::RiskDifference => "risk-difference",
            ContrastKind::RiskRatio => "risk-ratio",
        })
    }
}

impl FromStr for ContrastKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContrastKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown contrast `{s}`")))
    }
}

pub fn contrast(theta1: &ThetaCurve, theta0: &ThetaCurve, t: usize, kind: ContrastKind) -> Result<f64> {
    kind.evaluate(theta1.at(t)?, theta0.at(t)?)
}

/// Writes curves as `arm,t,estimate` rows.
pub fn write_theta_csv<W: std::io::Write>(writer: W, curves: &[ThetaCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["arm", "t", "estimate"])?;
    for c in curves {
        for (t, v) in c.values.iter().enumerate() {
            w.write_record([c.arm.to_string(), t.to_string(), format!("{v}")])?;
        }
    }
    w.flush().map_err(|e| Error::io("<theta csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn curve(arm: u8, tail: &[f64]) -> ThetaCurve {
        ThetaCurve::from_values(arm, tail, CONCURRENT, "test")
    }

    #[test]
    fn zero_hazards_survive() {
        let h = HazardMatrix::from_rows(&[vec![0.0; 4], vec![0.0; 4]]).unwrap();
        let s = product_limit(&h, 4, SurvivalKind::Event).unwrap();
        assert!(s.row(0).iter().chain(s.row(1)).all(|&v| v == 1.0));
    }

    #[test]
    fn constant_half_hazard() {
        let h = HazardMatrix::from_rows(&[vec![0.5; 3]]).unwrap();
        let s = product_limit(&h, 3, SurvivalKind::Event).unwrap();
        assert_eq!(s.at(0, 3), 0.125);
        let g = product_limit(&h, 3, SurvivalKind::Censoring).unwrap();
        assert_eq!(g.at(0, 1), 1.0);
        assert_eq!(g.at(0, 3), 0.25);
    }

    #[test]
    fn control_reference_subject_two_periods() {
        let h = |t: f64| 1.0 / (1.0 + (-(-3.0 + 0.3 * t)).exp());
        let m = HazardMatrix::from_rows(&[vec![h(1.0), h(2.0)]]).unwrap();
        let s = product_limit(&m, 2, SurvivalKind::Event).unwrap();
        let expected = (1.0 - crate::logistic::expit(-2.7)) * (1.0 - crate::logistic::expit(-2.4));
        assert_abs_diff_eq!(s.at(0, 2), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(s.at(0, 2), 0.8591, epsilon = 1e-4);
    }

    #[test]
    fn degenerate_hazard_rejected() {
        let h = HazardMatrix::from_rows(&[vec![0.2, 1.0]]).unwrap();
        match product_limit(&h, 2, SurvivalKind::Event) {
            Err(Error::DegenerateHazard { subject: 0, period: 2, value }) => assert_eq!(value, 1.0),
            other => panic!("unexpected {other:?}"),
        }
        // the censoring product never reaches the last period
        assert!(product_limit(&h, 2, SurvivalKind::Censoring).is_ok());
    }

    #[test]
    fn plugin_averages_concurrent_rows() {
        let h = HazardMatrix::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.5], vec![0.9, 0.9]]).unwrap();
        let s = product_limit(&h, 2, SurvivalKind::Event).unwrap();
        let th = theta_plugin(&s, &[true, true, false], 1, None).unwrap();
        assert_eq!(th.values, vec![1.0, 0.75, 0.625]);
        let single = theta_plugin(&s, &[false, true, false], 1, None).unwrap();
        assert_eq!(&single.values[1..], s.row(1));
        assert!(matches!(
            theta_plugin(&s, &[false; 3], 1, None),
            Err(Error::EmptyPopulation(_))
        ));
    }

    #[test]
    fn drmst_sums_to_tau_minus_one() {
        let ones = curve(1, &[1.0; 8]);
        let zeros = curve(0, &[0.0; 8]);
        assert_eq!(drmst(&ones, &zeros, 8).unwrap(), 7.0);
        assert_eq!(drmst(&ones, &ones, 8).unwrap(), 0.0);
        assert!(drmst(&curve(1, &[1.0; 3]), &zeros, 8).is_err());
        let mut other = zeros.clone();
        other.population = "all".into();
        assert!(drmst(&ones, &other, 8).is_err());
    }

    #[test]
    fn contrast_arithmetic() {
        let c1 = curve(1, &[0.8]);
        let c0 = curve(0, &[0.4]);
        assert_abs_diff_eq!(contrast(&c1, &c0, 1, ContrastKind::SurvivalRatio).unwrap(), 2.0);
        assert_abs_diff_eq!(contrast(&c1, &c0, 1, ContrastKind::RecoveryRatio).unwrap(), 0.5);
        assert_abs_diff_eq!(contrast(&c1, &c0, 1, ContrastKind::RiskDifference).unwrap(), -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(contrast(&c1, &c0, 1, ContrastKind::RiskRatio).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        for k in ContrastKind::ALL {
            assert_abs_diff_eq!(contrast(&c1, &c1, 1, k).unwrap(), k.null_value(), epsilon = 1e-15);
            assert_eq!(k.to_string().parse::<ContrastKind>().unwrap(), k);
        }
        let zero = curve(0, &[0.0]);
        assert!(matches!(
            contrast(&c1, &zero, 1, ContrastKind::SurvivalRatio),
            Err(Error::DivisionDomain(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (t1, t0) = (0.63, 0.41);
        for k in ContrastKind::ALL {
            let (g1, g0) = k.gradient(t1, t0).unwrap();
            let eps = 1e-6;
            let n1 = (k.evaluate(t1 + eps, t0).unwrap() - k.evaluate(t1 - eps, t0).unwrap()) / (2.0 * eps);
            let n0 = (k.evaluate(t1, t0 + eps).unwrap() - k.evaluate(t1, t0 - eps).unwrap()) / (2.0 * eps);
            assert_abs_diff_eq!(g1, n1, epsilon = 1e-7);
            assert_abs_diff_eq!(g0, n0, epsilon = 1e-7);
        }
    }

    #[test]
    fn theta_csv_layout() {
        let mut buf = Vec::new();
        write_theta_csv(&mut buf, &[curve(1, &[0.5])]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "arm,t,estimate\n1,0,1\n1,1,0.5\n");
    }

    proptest! {
        #[test]
        fn survival_rows_are_monotone_products(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..0.99, 6), 1..20)
        ) {
            let h = HazardMatrix::from_rows(&rows).unwrap();
            for kind in [SurvivalKind::Event, SurvivalKind::Censoring] {
                let s = product_limit(&h, 6, kind).unwrap();
                for i in 0..rows.len() {
                    for t in 1..=6 {
                        let v = s.at(i, t);
                        prop_assert!(v > 0.0 && v <= 1.0);
                        let step = if t > kind.lag() { 1.0 - h.at(i, t - kind.lag()) } else { 1.0 };
                        prop_assert_eq!(v, s.at(i, t - 1) * step);
                    }
                }
            }
        }

        #[test]
        fn drmst_antisymmetric_and_duplication_invariant(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..0.9, 5), 1..15),
            other in prop::collection::vec(prop::collection::vec(0.0f64..0.9, 5), 1..15),
        ) {
            let s1 = product_limit(&HazardMatrix::from_rows(&rows).unwrap(), 5, SurvivalKind::Event).unwrap();
            let s0 = product_limit(&HazardMatrix::from_rows(&other).unwrap(), 5, SurvivalKind::Event).unwrap();
            let t1 = theta_plugin(&s1, &vec![true; rows.len()], 1, None).unwrap();
            let t0 = theta_plugin(&s0, &vec![true; other.len()], 0, None).unwrap();
            prop_assert_eq!(drmst(&t1, &t0, 5).unwrap(), -drmst(&t0, &t1, 5).unwrap());
            for t in 1..=5 {
                let rd = contrast(&t1, &t0, t, ContrastKind::RiskDifference).unwrap();
                prop_assert!((rd + (t1.values[t] - t0.values[t])).abs() < 1e-15);
            }
            let doubled: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
            let s2 = product_limit(&HazardMatrix::from_rows(&doubled).unwrap(), 5, SurvivalKind::Event).unwrap();
            let t2 = theta_plugin(&s2, &vec![true; doubled.len()], 1, None).unwrap();
            for (a, b) in t1.values.iter().zip(&t2.values) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
