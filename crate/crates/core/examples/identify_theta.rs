//! Plug-in concurrent survival curves from fitted hazards, compared with the
//! curves of the generating process.

use platform_rmst::estimators::{EstimationConfig, Estimator, Method};
use platform_rmst::simulation::{gen_trial, truth_oracle, DgpConfig};

fn main() -> platform_rmst::Result<()> {
    let dgp = DgpConfig { n: 5000, rho: 0.4, seed: 5, ..Default::default() };
    let data = gen_trial(&dgp)?;
    let cfg = EstimationConfig { tau: 8, ..Default::default() };
    let truth = truth_oracle(&dgp, cfg.tau, 200_000)?;
    let mut est = Estimator::new(&data, &cfg)?;
    let oc = est.outcome_regression(Method::OrOc)?;
    let ac = est.outcome_regression(Method::OrAc)?;
    println!(" t  theta1   truth    theta0(oc) theta0(ac) truth");
    for t in 0..=cfg.tau {
        println!(
            "{t:>2}  {:.4}   {:.4}   {:.4}     {:.4}     {:.4}",
            oc.treated.values[t], truth.treated.values[t], oc.control.values[t], ac.control.values[t], truth.control.values[t]
        );
    }
    println!("dRMST: oc {:.4}, ac {:.4}, truth {:.4}", oc.estimate, ac.estimate, truth.drmst);
    Ok(())
}
