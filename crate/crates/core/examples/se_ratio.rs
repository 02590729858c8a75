//! Mean standard-error ratio of the concurrent-only to the pooled-control
//! doubly robust estimator under each availability regime.

use platform_rmst::estimators::Method;
use platform_rmst::harness::{se_ratio_study, ScenarioConfig};
use platform_rmst::simulation::AvailabilityRegime;

fn main() -> platform_rmst::Result<()> {
    let config = ScenarioConfig {
        rho_grid: vec![0.2, 0.5, 0.8],
        reps: 50,
        tau_list: vec![8],
        methods: vec![Method::DrOc, Method::DrAc],
        ..Default::default()
    };
    for r in se_ratio_study(&config, &[AvailabilityRegime::Deterministic, AvailabilityRegime::Stochastic])? {
        println!("{:<5} rho {:.1}  {} ratio {:.4}  ({} pairs)", r.regime, r.rho, r.pair, r.mean_ratio, r.pairs);
    }
    Ok(())
}
