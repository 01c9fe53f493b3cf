//! Stochastic-gradient training against exact truth rates.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use super::ToyConvModel;
use crate::error::{Error, Result};
use crate::forward::{corrupt_with_bank, KernelBank};
use crate::lattice::{BoundaryCondition, IntensityGrid};
use crate::loss::LossKind;
use crate::reverse::oracle_rates;
use crate::rng;
use crate::schedule::Schedule;

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// `θ ← θ - lr · g`.
    Sgd,
    /// Bias-corrected Adam.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::adam()),
            other => Err(Error::InvalidParameter(format!("unknown optimizer {other:?} (expected sgd or adam)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub rate: f64,
    pub boundary: BoundaryCondition,
    /// Rescale the batch gradient to at most this Euclidean norm.
    pub grad_clip: Option<f64>,
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::InvalidParameter("batch size and iterations must be positive".into()));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate must be positive, got {}", self.rate)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("gradient clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss per iteration.
    pub history: Vec<f64>,
}

impl TrainReport {
    /// CSV `iter,loss`.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,loss\n");
        for (i, l) in self.history.iter().enumerate() {
            let _ = writeln!(s, "{i},{l:e}");
        }
        s
    }
}

pub fn train(model: &mut ToyConvModel, data: &[IntensityGrid], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(model, data, cfg, |_, _| {})
}

/// Each iteration draws `batch_size` (image, step) pairs, corrupts them,
/// computes exact reverse rates from the ledgers and takes one plain SGD
/// step on the mean loss. Batch item `b` of iteration `i` uses the stream
/// keyed `(seed, i, b)`, so the history does not depend on thread count.
pub fn train_with_progress(
    model: &mut ToyConvModel,
    data: &[IntensityGrid],
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    let Some(first) = data.first() else {
        return Err(Error::InvalidParameter("training needs a non-empty dataset".into()));
    };
    if let Some(bad) = data.iter().position(|g| !g.same_shape(first)) {
        return Err(Error::ShapeMismatch(format!("training image {bad} differs in shape from image 0")));
    }
    if model.boundary() != cfg.boundary {
        return Err(Error::InvalidParameter(format!(
            "model padding is {:?} but training boundary is {:?}",
            model.boundary(),
            cfg.boundary
        )));
    }
    let bank = KernelBank::build(&cfg.schedule, first.width(), first.height(), cfg.rate, cfg.boundary)?;
    let steps = cfg.schedule.len();
    let mut history = Vec::with_capacity(cfg.iterations);
    let (mut m1, mut m2) = (vec![0.0; model.num_params()], vec![0.0; model.num_params()]);
    for iter in 0..cfg.iterations {
        let frozen = &*model;
        let items: Vec<Result<(f64, Vec<f64>)>> = (0..cfg.batch_size)
            .into_par_iter()
            .map(|b| {
                let mut r = rng::stream(cfg.seed, &[iter as u64, b as u64]);
                let img = &data[r.random_range(0..data.len())];
                let k = r.random_range(1..=steps);
                let s = corrupt_with_bank(img, &bank, k, &mut r)?;
                let truth = oracle_rates(&s.ledger, &s.grid, bank.kernel(k)?, cfg.rate)?;
                frozen.backward_pass(&s.grid, s.t, cfg.loss, &truth, s.dt)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; model.num_params()];
        for item in items {
            let (l, g) = item.map_err(|e| match e {
                Error::ZeroPrediction { .. } | Error::Divergence { .. } => Error::Divergence { iteration: iter },
                other => other,
            })?;
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let inv = 1.0 / cfg.batch_size as f64;
        loss *= inv;
        let mut scale = cfg.learning_rate * inv;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * inv;
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        if let Some(clip) = cfg.grad_clip {
            if norm > clip {
                scale *= clip / norm;
            }
        }
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                    *p -= scale * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let clip = scale / (cfg.learning_rate * inv);
                let step = (iter + 1) as i32;
                let c1 = 1.0 - beta1.powi(step);
                let c2 = 1.0 - beta2.powi(step);
                for (i, p) in model.params_mut().iter_mut().enumerate() {
                    let g = grad[i] * inv * clip;
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
                    *p -= cfg.learning_rate * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                }
            }
        }
        progress(iter, loss);
        history.push(loss);
    }
    Ok(TrainReport { history })
}
