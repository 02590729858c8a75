//! Generates trials under both availability regimes and writes one to CSV.

use platform_rmst::csv_io::write_trial_csv;
use platform_rmst::simulation::{gen_trial, AvailabilityRegime, DgpConfig};

fn main() -> platform_rmst::Result<()> {
    for availability in [AvailabilityRegime::Deterministic, AvailabilityRegime::Stochastic] {
        let data = gen_trial(&DgpConfig { availability, rho: 0.3, seed: 8, ..Default::default() })?;
        let treated = data.subjects.iter().filter(|s| s.a == 1).count();
        let events = data.subjects.iter().filter(|s| s.delta).count();
        println!(
            "{availability:?}: n {}, concurrent share {:.3}, treated {treated}, events {events}",
            data.n(),
            data.concurrent_fraction()
        );
    }
    let path = std::env::temp_dir().join("platform_rmst_trial.csv");
    write_trial_csv(&path, &gen_trial(&DgpConfig::default())?)?;
    println!("wrote {}", path.display());
    Ok(())
}
