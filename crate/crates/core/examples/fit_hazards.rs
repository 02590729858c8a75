//! Fits per-period event and censoring hazards on a simulated trial and
//! compares them with the generating coefficients.

use platform_rmst::hazard::{fit_hazard, ArmStratum, Conditioning, ModelSpec};
use platform_rmst::simulation::{gen_trial, DgpConfig};

fn main() -> platform_rmst::Result<()> {
    let dgp = DgpConfig { n: 20_000, seed: 11, ..Default::default() };
    let table = gen_trial(&dgp)?.person_period()?;
    let terms = ModelSpec::default_terms(&["w"]);
    let event = fit_hazard(&table, &ModelSpec::event(ArmStratum::Treated, Conditioning::ConcurrentOnly, terms.clone()).with_horizon(8))?;
    let censor = fit_hazard(&table, &ModelSpec::censor(ArmStratum::Both, Conditioning::Pooled, terms).with_horizon(8))?;
    println!("features: {:?}", event.feature_names);
    for m in 1..=8 {
        let fitted = event.coefficients[m - 1].as_deref().unwrap_or_default();
        let truth = dgp.event.intercept + dgp.event.arm + dgp.event.time * m as f64;
        println!("event  m={m}: intercept {:+.3} (generator {truth:+.3}), coefficients {:.3?}", fitted[0], &fitted[1..]);
    }
    for m in 1..=8 {
        let fitted = censor.coefficients[m - 1].as_deref().unwrap_or_default();
        let truth = dgp.censor.intercept + dgp.censor.time * m as f64;
        println!("censor m={m}: intercept {:+.3} (generator {truth:+.3})", fitted[0]);
    }
    println!("event fallback: {}, censoring fallback: {}", event.fallback, censor.fallback);
    Ok(())
}
