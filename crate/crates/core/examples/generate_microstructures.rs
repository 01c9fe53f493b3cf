//! Generate microstructures at an exact porosity with a trained model and
//! compare their two-point correlation with the training set.
//!
//! cargo run --release --example generate_microstructures -- [checkpoint] [samples]
//!
//! Without a checkpoint a model is trained briefly first, which is enough to
//! see the pipeline run but not to get good samples (see train_toy_model).

use dsd::dataset::synth_blobs;
use dsd::metrics::{intensity_correlation, mean_curve, mean_intensity};
use dsd::rate_model::{percentile_scale, train, Optimizer};
use dsd::{generate, polynomial_schedule, rng, BoundaryCondition, LossKind, SamplerConfig, ToyConvModel, TrainConfig};

fn main() -> dsd::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next();
    let n: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let boundary = BoundaryCondition::Periodic;
    let data = synth_blobs(16, 16, 500, 0.25, 1.5, 7)?;
    let mut model = match ckpt {
        Some(p) => ToyConvModel::load(p)?,
        None => {
            let cfg = TrainConfig {
                loss: LossKind::Likelihood,
                learning_rate: 1e-3,
                batch_size: 4,
                iterations: 500,
                seed: 7,
                schedule: polynomial_schedule(200, 4)?,
                rate: 40.0,
                boundary,
                grad_clip: None,
                optimizer: Optimizer::adam(),
            };
            let mut m = ToyConvModel::new(1, 32, boundary, percentile_scale(&data), cfg.rate, 7)?;
            train(&mut m, &data, &cfg)?;
            m
        }
    };
    let cfg = SamplerConfig::new(16, 16, vec![64], boundary, 40.0, 0.1);
    let mut samples = Vec::new();
    for i in 0..n {
        let out = generate(&mut model, &cfg, rng::derive_u64(1, &[i]))?;
        samples.push(out.grid);
    }
    let s2 = |set: &[dsd::IntensityGrid]| -> dsd::Result<Vec<f64>> {
        let curves = set.iter().map(|g| intensity_correlation(g, 8, boundary)).collect::<dsd::Result<Vec<_>>>()?;
        Ok(mean_curve(&curves))
    };
    let (gen, reference) = (s2(&samples)?, s2(&data)?);
    println!("porosity of every sample: {:?}", samples.iter().map(|g| mean_intensity(g, 0)).collect::<Vec<_>>());
    println!("lag  S2 generated  S2 training");
    for (lag, (g, r)) in gen.iter().zip(&reference).enumerate() {
        println!("{lag:>3}  {g:>12.4}  {r:>11.4}");
    }
    let dev = gen.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>() / gen.len() as f64;
    println!("mean |S2 deviation| {dev:.4}");
    Ok(())
}
