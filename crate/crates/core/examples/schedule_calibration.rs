//! Compare how evenly SSIM degrades under the logit, polynomial and cosine
//! schedules on a synthetic-blob set.
//!
//! cargo run --release --example schedule_calibration -- [samples]

use dsd::dataset::synth_blobs;
use dsd::schedule::calibrate;
use dsd::{cosine_schedule, logit_schedule, polynomial_schedule, BoundaryCondition};

fn main() -> dsd::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let data = synth_blobs(16, 16, n, 0.25, 1.5, 5)?;
    let steps = 200;
    let schedules = [
        ("logit 7.5/2.5", logit_schedule(steps, 7.5, 2.5)?),
        ("poly n=1", polynomial_schedule(steps, 1)?),
        ("poly n=4", polynomial_schedule(steps, 4)?),
        ("poly n=7", polynomial_schedule(steps, 7)?),
        ("cosine", cosine_schedule(steps)?),
    ];
    for (name, s) in &schedules {
        let curve = calibrate(&data, s, 120.0, BoundaryCondition::Periodic, 1.0, 1)?;
        let at = |k: usize| curve.points[k].mean_ssim;
        println!(
            "{name:<14} unevenness {:>8.3}   SSIM at k=20/100/180: {:.3} {:.3} {:.3}",
            curve.unevenness(),
            at(20),
            at(100),
            at(180)
        );
    }
    Ok(())
}
