//! Simulates one trial and estimates the restricted-mean difference with all five methods.

use std::time::Instant;

use platform_rmst::estimators::{estimate_methods, EstimationConfig, Method};
use platform_rmst::simulation::{gen_trial, truth_oracle, DgpConfig};

fn main() -> platform_rmst::Result<()> {
    let dgp = DgpConfig { rho: 0.5, seed: 2024, ..Default::default() };
    let data = gen_trial(&dgp)?;
    let cfg = EstimationConfig::default();
    let truth = truth_oracle(&dgp, cfg.tau, 200_000)?;
    println!("truth dRMST(tau={}) = {:.4}", cfg.tau, truth.drmst);
    let start = Instant::now();
    for (method, result) in estimate_methods(&data, &cfg, &Method::ALL)? {
        match result {
            Ok(r) => println!(
                "{method:<6} {:>8.4}  se {:.4}  95% CI [{:.4}, {:.4}]  p {:.3}",
                r.estimate, r.se, r.ci_lo, r.ci_hi, r.p_value
            ),
            Err(e) => println!("{method:<6} failed: {e}"),
        }
    }
    println!("elapsed {:.2?}", start.elapsed());
    Ok(())
}
