use rayon::prelude::*;

use super::{ssim::ssim, Schedule};
use crate::error::{Error, Result};
use crate::forward::corrupt;
use crate::kernel::TransitionKernel;
use crate::lattice::{BoundaryCondition, IntensityGrid};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub k: usize,
    pub t: f64,
    pub mean_ssim: f64,
    pub stderr: f64,
}

/// Mean SSIM against the clean sample at each schedule step, `k = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    pub points: Vec<CalibrationPoint>,
}

impl CalibrationCurve {
    /// `max_k |ΔSSIM_k| / mean_k |ΔSSIM_k|` over consecutive observation
    /// times `t_1..t_T`. 1 means perfectly even degradation. The clean point
    /// `k = 0` is not an observation time and is left out.
    pub fn unevenness(&self) -> f64 {
        let deltas: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.k > 0)
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| (w[1].mean_ssim - w[0].mean_ssim).abs())
            .collect();
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        deltas.iter().copied().fold(0.0, f64::max) / mean
    }

    /// CSV with header `k,t_k,mean_ssim,stderr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,t_k,mean_ssim,stderr\n");
        for p in &self.points {
            s.push_str(&format!("{},{:e},{},{}\n", p.k, p.t, p.mean_ssim, p.stderr));
        }
        s
    }
}

/// Corrupt every sample to each `t_k` and record the mean SSIM against its
/// clean version.
///
/// Sample `i` draws from the stream keyed `(seed, i)` at every step, so
/// consecutive steps share random numbers and the curve is smooth in `k`.
pub fn calibrate(
    samples: &[IntensityGrid],
    schedule: &Schedule,
    rate: f64,
    boundary: BoundaryCondition,
    data_range: f64,
    seed: u64,
) -> Result<CalibrationCurve> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidParameter("calibration needs at least one sample".into()))?;
    if let Some(bad) = samples.iter().find(|s| !s.same_shape(first)) {
        return Err(Error::ShapeMismatch(format!(
            "calibration samples must share a shape: {}x{} vs {}x{}",
            first.width(),
            first.height(),
            bad.width(),
            bad.height()
        )));
    }
    let n = samples.len() as f64;
    let mut points = vec![CalibrationPoint {
        k: 0,
        t: 0.0,
        mean_ssim: 1.0,
        stderr: 0.0,
    }];
    for (i, &t) in schedule.times().iter().enumerate() {
        let kernel = TransitionKernel::new(boundary, first.width(), first.height(), rate, t)?;
        let scores = samples
            .par_iter()
            .enumerate()
            .map(|(j, clean)| {
                let mut r = rng::stream(seed, &[j as u64]);
                let (noisy, _) = corrupt(clean, &kernel, &mut r)?;
                ssim(clean, &noisy, data_range)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = scores.iter().sum::<f64>() / n;
        let var = if scores.len() > 1 {
            scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        points.push(CalibrationPoint {
            k: i + 1,
            t,
            mean_ssim: mean,
            stderr: (var / n).sqrt(),
        });
    }
    Ok(CalibrationCurve { points })
}
