//! Observation-time schedules `0 = t_0 < t_1 < ... < t_T = 1`, SSIM, and
//! SSIM-based schedule calibration.

mod calibrate;
mod ssim;

pub use calibrate::{calibrate, CalibrationCurve, CalibrationPoint};
pub use ssim::{ssim, ssim_channel, SSIM_WINDOW};

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

pub const DEFAULT_TAU1: f64 = 7.5;
pub const DEFAULT_TAU2: f64 = 2.5;
/// Forward rate used for 28×28-scale grids.
pub const DEFAULT_RATE: f64 = 120.0;
/// Offset of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Logit { tau1: f64, tau2: f64 },
    Polynomial { degree: u32 },
    Cosine,
}

/// Strictly increasing observation times `t_1..t_T` with `t_T = 1`; `t_0 = 0`
/// is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    times: Vec<f64>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `-ln σ(u)`, evaluated without overflow.
fn neg_log_sigmoid(u: f64) -> f64 {
    if u > 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

impl Schedule {
    fn validated(kind: ScheduleKind, times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidParameter("schedule needs at least one step".into()));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !(t > prev && t <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "schedule is not strictly increasing in (0,1] at k={}: t={t}, previous {prev}",
                    i + 1
                )));
            }
            prev = t;
        }
        if times[times.len() - 1] != 1.0 {
            return Err(Error::InvalidParameter("final observation time must be 1".into()));
        }
        Ok(Schedule { kind, times })
    }

    /// Build from explicit times (e.g. read back from CSV).
    pub fn from_times(kind: ScheduleKind, times: Vec<f64>) -> Result<Self> {
        Self::validated(kind, times)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of observation steps `T`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t_1..t_T`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `t_k` for `k` in `0..=T`.
    pub fn time(&self, k: usize) -> Result<f64> {
        match k {
            0 => Ok(0.0),
            k if k <= self.times.len() => Ok(self.times[k - 1]),
            k => Err(Error::InvalidParameter(format!(
                "step {k} outside 0..={}",
                self.times.len()
            ))),
        }
    }

    /// `t_k - t_{k-1}` for `k` in `1..=T`.
    pub fn dt(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidParameter("dt is defined for k >= 1".into()));
        }
        Ok(self.time(k)? - self.time(k - 1)?)
    }

    /// CSV with header `k,t_k`, one row per `k = 1..=T`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,t_k\n");
        for (i, t) in self.times.iter().enumerate() {
            s.push_str(&format!("{},{t:e}\n", i + 1));
        }
        s
    }
}

/// Logit schedule: `Φ(e^{-τ₂ t_k})` is linear in `k`, running from
/// `-Φ(e^{-τ₁})` at `k = 1` to `Φ(e^{-τ₂})` at `k = T`.
pub fn logit_schedule(steps: usize, tau1: f64, tau2: f64) -> Result<Schedule> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("logit schedule needs T >= 2, got {steps}")));
    }
    if !(tau1 > 0.0 && tau2 > 0.0 && tau1.is_finite() && tau2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tau1, tau2 must be positive, got {tau1}, {tau2}"
        )));
    }
    let (p1, p2) = ((-tau1).exp(), (-tau2).exp());
    for p in [p1, p2] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "logit argument {p} outside (0,1)"
            )));
        }
    }
    let (phi1, phi2) = (logit(p1), logit(p2));
    let denom = (steps - 1) as f64;
    let times = (1..=steps)
        .map(|k| {
            if k == steps {
                return 1.0;
            }
            let rhs = ((k - 1) as f64 * phi2 - (steps - k) as f64 * phi1) / denom;
            neg_log_sigmoid(rhs) / tau2
        })
        .collect();
    Schedule::validated(ScheduleKind::Logit { tau1, tau2 }, times)
}

/// `t_k = (k/T)^n`.
pub fn polynomial_schedule(steps: usize, degree: u32) -> Result<Schedule> {
    if steps < 1 || degree < 1 {
        return Err(Error::InvalidParameter(format!(
            "polynomial schedule needs T >= 1 and n >= 1, got T={steps}, n={degree}"
        )));
    }
    let times = (1..=steps)
        .map(|k| (k as f64 / steps as f64).powi(degree as i32))
        .collect();
    Schedule::validated(ScheduleKind::Polynomial { degree }, times)
}

/// Cosine schedule: with `ᾱ_k = f(k)/f(0)`,
/// `f(k) = cos²(((k/T) + s)/(1 + s) · π/2)`, observation times are the
/// destroyed-signal fraction `t_k = (1 - ᾱ_k)/(1 - ᾱ_T)`.
pub fn cosine_schedule(steps: usize) -> Result<Schedule> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("cosine schedule needs T >= 2, got {steps}")));
    }
    let s = COSINE_OFFSET;
    let f = |k: usize| (((k as f64 / steps as f64) + s) / (1.0 + s) * FRAC_PI_2).cos().powi(2);
    let f0 = f(0);
    let end = 1.0 - f(steps) / f0;
    let times = (1..=steps)
        .map(|k| if k == steps { 1.0 } else { (1.0 - f(k) / f0) / end })
        .collect();
    Schedule::validated(ScheduleKind::Cosine, times)
}
