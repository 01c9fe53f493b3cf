//! Train the small convolutional rate model on synthetic blobs and save a
//! checkpoint.
//!
//! cargo run --release --example train_toy_model -- [iterations] [checkpoint]

use dsd::dataset::synth_blobs;
use dsd::rate_model::{percentile_scale, train_with_progress, Optimizer};
use dsd::{polynomial_schedule, BoundaryCondition, LossKind, ToyConvModel, TrainConfig};

fn main() -> dsd::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let out = args.next().unwrap_or_else(|| "toy_model.dsdm".into());
    let data = synth_blobs(16, 16, 500, 0.25, 1.5, 7)?;
    let cfg = TrainConfig {
        loss: LossKind::Likelihood,
        learning_rate: 1e-3,
        batch_size: 4,
        iterations,
        seed: 7,
        schedule: polynomial_schedule(200, 4)?,
        rate: 40.0,
        boundary: BoundaryCondition::Periodic,
        grad_clip: None,
        optimizer: Optimizer::adam(),
    };
    let mut model = ToyConvModel::new(1, 32, cfg.boundary, percentile_scale(&data), cfg.rate, 7)?;
    let report = train_with_progress(&mut model, &data, &cfg, |i, loss| {
        if (i + 1) % 500 == 0 {
            println!("iter {:>6}  loss {loss:.4}", i + 1);
        }
    })?;
    model.save(&out)?;
    let tail = report.history.len().min(200);
    let mean = report.history[report.history.len() - tail..].iter().sum::<f64>() / tail as f64;
    println!("saved {out} ({} parameters), mean loss over the last {tail} iterations {mean:.4}", model.num_params());
    Ok(())
}
