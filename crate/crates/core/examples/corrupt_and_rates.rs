//! Corrupt a synthetic microstructure along the logit schedule and look at
//! the exact reverse rates the oracle assigns at a few observation times.

use dsd::dataset::synth_blobs;
use dsd::metrics::conservation_audit;
use dsd::{corrupt_at_step, logit_schedule, oracle_rates, rng, BoundaryCondition, TransitionKernel};

fn main() -> dsd::Result<()> {
    let boundary = BoundaryCondition::Periodic;
    let rate = 120.0;
    let clean = synth_blobs(28, 28, 1, 0.3, 2.0, 1)?.remove(0);
    let schedule = logit_schedule(200, 7.5, 2.5)?;
    for k in [1, 50, 100, 150, 200] {
        let s = corrupt_at_step(&clean, &schedule, k, rate, boundary, &mut rng::stream(3, &[k as u64]))?;
        let kernel = TransitionKernel::new(boundary, 28, 28, rate, s.t)?;
        let rates = oracle_rates(&s.ledger, &s.grid, &kernel, rate)?;
        let audit = conservation_audit(&clean, &s.grid)?;
        println!(
            "k={k:<3} t={:.3e}  max rate {:>10.2}  mean rate {:>8.3}  {}",
            s.t,
            rates.max_rate(),
            rates.data().iter().sum::<f64>() / rates.len() as f64,
            audit.to_text().trim()
        );
    }
    Ok(())
}
