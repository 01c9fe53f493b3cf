//! Forward corruption: every particle independently draws its destination
//! from the transition kernel.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::lattice::{BoundaryCondition, IntensityGrid, Particle, ParticleLedger, Pixel};
use crate::schedule::Schedule;

/// Realised positions whose kernel probability falls below this are redrawn.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

/// Move each unit of `grid` once according to `kernel`.
///
/// Channels never mix, so per-channel totals are preserved exactly. The
/// ledger lists particles in pixel order of their origins.
pub fn corrupt<R: Rng + ?Sized>(
    grid: &IntensityGrid,
    kernel: &TransitionKernel,
    rng: &mut R,
) -> Result<(IntensityGrid, ParticleLedger)> {
    if grid.width() != kernel.width() || grid.height() != kernel.height() {
        return Err(Error::ShapeMismatch(format!(
            "grid is {}x{}, kernel is {}x{}",
            grid.width(),
            grid.height(),
            kernel.width(),
            kernel.height()
        )));
    }
    let mut out = IntensityGrid::zeros(grid.width(), grid.height(), grid.channels());
    let mut lists: Vec<Vec<Particle>> = (0..grid.channels())
        .map(|c| Vec::with_capacity(grid.total_intensity(c) as usize))
        .collect();
    for (origin, c, n) in grid.occupied() {
        for _ in 0..n {
            let current = loop {
                let dest = kernel.sample_destination(origin, rng);
                if kernel.prob_unchecked(origin, dest) >= PROBABILITY_FLOOR {
                    break dest;
                }
            };
            out.add(current, c, 1);
            lists[c].push(Particle { origin, current });
        }
    }
    Ok((out, ParticleLedger::new(grid.width(), grid.height(), lists)))
}

/// Kernels for every observation time `t_1..t_T` of a schedule.
#[derive(Debug, Clone)]
pub struct KernelBank {
    boundary: BoundaryCondition,
    rate: f64,
    schedule: Schedule,
    kernels: Vec<TransitionKernel>,
}

fn cache_file_name(boundary: BoundaryCondition, w: usize, h: usize, rate: f64, t: f64) -> String {
    let b = match boundary {
        BoundaryCondition::NoFlux => "noflux",
        BoundaryCondition::Periodic => "periodic",
    };
    format!("{b}_{w}x{h}_r{:016x}_t{:016x}.dsdk", rate.to_bits(), t.to_bits())
}

impl KernelBank {
    pub fn build(
        schedule: &Schedule,
        width: usize,
        height: usize,
        rate: f64,
        boundary: BoundaryCondition,
    ) -> Result<Self> {
        let kernels = schedule
            .times()
            .iter()
            .map(|&t| TransitionKernel::new(boundary, width, height, rate, t))
            .collect::<Result<_>>()?;
        Ok(KernelBank {
            boundary,
            rate,
            schedule: schedule.clone(),
            kernels,
        })
    }

    /// Like [`KernelBank::build`], reusing kernel dumps found in `dir` and
    /// writing any that are missing.
    pub fn load_or_build(
        dir: impl AsRef<Path>,
        schedule: &Schedule,
        width: usize,
        height: usize,
        rate: f64,
        boundary: BoundaryCondition,
    ) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut kernels = Vec::with_capacity(schedule.len());
        for &t in schedule.times() {
            let path = dir.join(cache_file_name(boundary, width, height, rate, t));
            let cached = if path.exists() { TransitionKernel::load(&path).ok() } else { None };
            let kernel = match cached {
                Some(k) => k,
                None => {
                    let k = TransitionKernel::new(boundary, width, height, rate, t)?;
                    k.dump(&path)?;
                    k
                }
            };
            kernels.push(kernel);
        }
        Ok(KernelBank {
            boundary,
            rate,
            schedule: schedule.clone(),
            kernels,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.boundary
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Kernel at `t_k`, `k` in `1..=T`.
    pub fn kernel(&self, k: usize) -> Result<&TransitionKernel> {
        if k == 0 || k > self.kernels.len() {
            return Err(Error::InvalidParameter(format!(
                "step {k} outside 1..={}",
                self.kernels.len()
            )));
        }
        Ok(&self.kernels[k - 1])
    }
}

/// Output of corrupting a clean grid to one schedule step.
#[derive(Debug, Clone)]
pub struct CorruptedSample {
    pub grid: IntensityGrid,
    pub ledger: ParticleLedger,
    pub k: usize,
    pub t: f64,
    /// `t_k - t_{k-1}`, the likelihood-loss weight.
    pub dt: f64,
}

/// Corrupt to `t_k`, building the kernel on the fly.
pub fn corrupt_at_step<R: Rng + ?Sized>(
    grid: &IntensityGrid,
    schedule: &Schedule,
    k: usize,
    rate: f64,
    boundary: BoundaryCondition,
    rng: &mut R,
) -> Result<CorruptedSample> {
    if k == 0 || k > schedule.len() {
        return Err(Error::InvalidParameter(format!(
            "step {k} outside 1..={}",
            schedule.len()
        )));
    }
    let t = schedule.time(k)?;
    let kernel = TransitionKernel::new(boundary, grid.width(), grid.height(), rate, t)?;
    let (g, ledger) = corrupt(grid, &kernel, rng)?;
    Ok(CorruptedSample {
        grid: g,
        ledger,
        k,
        t,
        dt: schedule.dt(k)?,
    })
}

/// Corrupt to `t_k` using a precomputed bank.
pub fn corrupt_with_bank<R: Rng + ?Sized>(
    grid: &IntensityGrid,
    bank: &KernelBank,
    k: usize,
    rng: &mut R,
) -> Result<CorruptedSample> {
    let kernel = bank.kernel(k)?;
    let (g, ledger) = corrupt(grid, kernel, rng)?;
    Ok(CorruptedSample {
        grid: g,
        ledger,
        k,
        t: kernel.time(),
        dt: bank.schedule().dt(k)?,
    })
}

/// Pixels a particle could be found at after corruption: positive kernel
/// probability from its origin.
pub fn is_reachable(kernel: &TransitionKernel, origin: Pixel, current: Pixel) -> bool {
    kernel.prob_unchecked(origin, current) > 0.0
}
