//! Pooled versus concurrent-only outcome regression when non-concurrent
//! controls follow a shifted event hazard.

use platform_rmst::estimators::Method;
use platform_rmst::harness::{a7_scenario_grid, ScenarioConfig, TruthCache};
use platform_rmst::simulation::{AvailabilityRegime, DgpConfig};

fn main() -> platform_rmst::Result<()> {
    let config = ScenarioConfig {
        dgp: DgpConfig { availability: AvailabilityRegime::Stochastic, ..Default::default() },
        rho_grid: vec![0.5],
        reps: 40,
        tau_list: vec![8],
        methods: vec![Method::OrOc, Method::OrAc],
        bootstrap_b: 20,
        truth_reps: 100_000,
        ..Default::default()
    };
    for r in a7_scenario_grid(&config, 0.5, &TruthCache::default())? {
        let z = r.bias / (r.mc_se.powi(2) + r.truth_se.powi(2)).sqrt();
        println!("{:<8} {:<7} {:<6} bias {:+.4}  z {z:+.2}", r.scenario, r.specification, r.method, r.bias);
    }
    Ok(())
}
