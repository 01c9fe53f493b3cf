//! Run the sampler with the exact oracle predictor and measure how well it
//! recovers the clean grid at several CFL tolerances.
//!
//! cargo run --release --example oracle_reconstruction -- [trials]

use dsd::{generate, rng, BoundaryCondition, IntensityGrid, OraclePredictor, SamplerConfig};
use rand::Rng;

const SIZE: usize = 8;
const RATE: f64 = 10.0;

fn random_clean(seed: u64) -> IntensityGrid {
    let mut r = rng::stream(seed, &[0]);
    let mut g = IntensityGrid::zeros(SIZE, SIZE, 1);
    for _ in 0..r.random_range(1..=16) {
        let (x, y) = (r.random_range(0..SIZE), r.random_range(0..SIZE));
        g.set(x, y, 0, g.get(x, y, 0) + 1);
    }
    g
}

fn l1(a: &IntensityGrid, b: &IntensityGrid) -> f64 {
    let s: u64 = a.values().iter().zip(b.values()).map(|(x, y)| x.abs_diff(*y)).sum();
    s as f64 / a.values().len() as f64
}

fn main() -> dsd::Result<()> {
    let trials: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let boundary = BoundaryCondition::Periodic;
    for eps in [0.2, 0.1, 0.05, 0.01] {
        let mut err = 0.0;
        let mut steps = 0;
        for trial in 0..trials {
            let clean = random_clean(trial);
            let mut oracle = OraclePredictor::from_clean(&clean, boundary, RATE, &mut rng::stream(trial, &[1]))?;
            let cfg = SamplerConfig::new(SIZE, SIZE, clean.totals(), boundary, RATE, eps);
            let out = generate(&mut oracle, &cfg, trial)?;
            err += l1(&out.grid, &clean);
            steps += out.steps();
        }
        println!(
            "eps {eps:<5} mean L1 error {:.4}  mean steps {:.0}",
            err / trials as f64,
            steps as f64 / trials as f64
        );
    }
    Ok(())
}
