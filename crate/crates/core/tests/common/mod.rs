#![allow(dead_code)]

use std::collections::BTreeMap;

use platform_rmst::hazard::Term;
use platform_rmst::{SubjectRecord, TrialData};

/// Outcome patterns of a two-period world: (observed period, event).
const PATTERNS: [(usize, bool); 4] = [(1, true), (1, false), (2, true), (2, false)];

/// Two periods, binary `w`, entry time in {0, 1}. Every (entry, w, arm) cell
/// of concurrent subjects holds all four outcome patterns with uneven counts;
/// non-concurrent controls carry different outcomes so pooling would matter.
pub fn tiny_world() -> TrialData {
    let mut subjects = Vec::new();
    let mut push = |e: f64, w: f64, a: u8, v: bool, (t, d): (usize, bool), copies: usize| {
        for _ in 0..copies {
            subjects.push(SubjectRecord {
                id: format!("s{}", subjects.len()),
                w: vec![w],
                e,
                v_tilde: v,
                a,
                t_obs: t,
                delta: d,
                p_avail: None,
            });
        }
    };
    for (cell, (e, w)) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)].into_iter().enumerate() {
        for a in 0..2u8 {
            for (j, p) in PATTERNS.into_iter().enumerate() {
                push(e, w, a, true, p, 2 + (3 * cell + 5 * a as usize + 7 * j) % 5);
            }
        }
        for (j, p) in PATTERNS.into_iter().enumerate() {
            push(e, w, 0, false, p, 1 + (cell + 3 * j) % 4 + if p.1 { 3 } else { 0 });
        }
    }
    TrialData::new(2, vec!["w".into()], subjects).unwrap()
}

/// Saturated regressors over the four (entry, w) cells.
pub fn saturated_terms() -> Vec<Term> {
    vec![Term::Entry, Term::covariate("w"), Term::Product(vec![Term::Entry, Term::covariate("w")])]
}

pub fn saturated_spec() -> platform_rmst::estimators::NuisanceSpec {
    let mut spec = platform_rmst::estimators::NuisanceSpec::with_covariates(&["w"]);
    spec.event_terms = saturated_terms();
    spec.censor_terms = saturated_terms();
    spec
}

/// Concurrent-population survival `theta(a, t)`, `t = 1, 2`, by counting:
/// cell hazards are events over those at risk among concurrent subjects of
/// arm `a`, and cells are weighted by their share of the concurrent population.
pub fn enumerate_theta(data: &TrialData, a: u8) -> [f64; 2] {
    let key = |s: &SubjectRecord| ((s.e * 2.0) as i64, (s.w[0] * 2.0) as i64);
    let mut cell_n: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut counts: BTreeMap<(i64, i64), [[f64; 2]; 2]> = BTreeMap::new();
    for s in data.subjects.iter().filter(|s| s.v_tilde) {
        *cell_n.entry(key(s)).or_default() += 1.0;
        if s.a != a {
            continue;
        }
        let c = counts.entry(key(s)).or_default();
        for m in 1..=s.t_obs {
            c[m - 1][1] += 1.0;
            if m == s.t_obs && s.delta {
                c[m - 1][0] += 1.0;
            }
        }
    }
    let total: f64 = cell_n.values().sum();
    let mut theta = [0.0; 2];
    for (cell, n) in &cell_n {
        let c = counts[cell];
        let s1 = 1.0 - c[0][0] / c[0][1];
        let s2 = s1 * (1.0 - c[1][0] / c[1][1]);
        theta[0] += n / total * s1;
        theta[1] += n / total * s2;
    }
    theta
}
