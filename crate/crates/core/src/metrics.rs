//! Evaluation metrics: conservation audit, porosity and two-point
//! correlation.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, IntensityGrid};

/// Per-channel comparison of total intensity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConservationReport {
    pub conserved: Vec<bool>,
    /// `after - before` per channel.
    pub deltas: Vec<i128>,
}

impl ConservationReport {
    pub fn all_conserved(&self) -> bool {
        self.conserved.iter().all(|&c| c)
    }

    /// One line per channel, `channel 0: OK, delta 0`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (c, (&ok, &d)) in self.conserved.iter().zip(&self.deltas).enumerate() {
            let _ = writeln!(s, "channel {c}: {}, delta {d}", if ok { "OK" } else { "FAIL" });
        }
        s
    }
}

pub fn conservation_audit(before: &IntensityGrid, after: &IntensityGrid) -> Result<ConservationReport> {
    if !before.same_shape(after) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            before.width(),
            before.height(),
            before.channels(),
            after.width(),
            after.height(),
            after.channels()
        )));
    }
    Ok(audit_totals(&before.totals(), &after.totals()))
}

/// Audit measured totals against expected ones.
pub fn audit_totals(expected: &[u64], actual: &[u64]) -> ConservationReport {
    let deltas: Vec<i128> = expected
        .iter()
        .zip(actual)
        .map(|(&e, &a)| a as i128 - e as i128)
        .collect();
    ConservationReport {
        conserved: deltas.iter().map(|&d| d == 0).collect(),
        deltas,
    }
}

fn check_binary(grid: &IntensityGrid) -> Result<()> {
    if grid.channels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "binary metrics need one channel, got {}",
            grid.channels()
        )));
    }
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let v = grid.get(x, y, 0);
            if v > 1 {
                return Err(Error::NonBinary { value: v, x, y });
            }
        }
    }
    Ok(())
}

/// Fraction of ones in a binary single-channel grid.
pub fn porosity(grid: &IntensityGrid) -> Result<f64> {
    check_binary(grid)?;
    Ok(grid.total_intensity(0) as f64 / grid.num_pixels() as f64)
}

/// Axis-aligned two-point correlation `S₂(ρ)`, `ρ = 0..=max_lag`.
///
/// Horizontal and vertical pairs are pooled. Periodic grids wrap; no-flux
/// grids only count pairs that fit inside the lattice.
pub fn two_point_correlation(grid: &IntensityGrid, max_lag: usize, boundary: BoundaryCondition) -> Result<Vec<f64>> {
    check_binary(grid)?;
    intensity_correlation(grid, max_lag, boundary)
}

/// The same estimator applied to raw intensities, `E[v(p) v(p + ρ)]`, for
/// any single-channel grid. It equals [`two_point_correlation`] on binary
/// grids; stacked units raise the lag-0 value above the mean intensity.
pub fn intensity_correlation(grid: &IntensityGrid, max_lag: usize, boundary: BoundaryCondition) -> Result<Vec<f64>> {
    if grid.channels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "correlation needs one channel, got {}",
            grid.channels()
        )));
    }
    let (w, h) = (grid.width(), grid.height());
    if max_lag >= w.min(h) {
        return Err(Error::InvalidParameter(format!(
            "max lag {max_lag} must be below min(W,H) = {}",
            w.min(h)
        )));
    }
    let v = |x: usize, y: usize| grid.get(x, y, 0);
    let out = (0..=max_lag)
        .map(|lag| {
            let (mut hits, mut pairs) = (0u64, 0u64);
            for y in 0..h {
                for x in 0..w {
                    let right = match boundary {
                        BoundaryCondition::Periodic => Some((x + lag) % w),
                        BoundaryCondition::NoFlux => (x + lag < w).then_some(x + lag),
                    };
                    if let Some(x2) = right {
                        pairs += 1;
                        hits += v(x, y) * v(x2, y);
                    }
                    let down = match boundary {
                        BoundaryCondition::Periodic => Some((y + lag) % h),
                        BoundaryCondition::NoFlux => (y + lag < h).then_some(y + lag),
                    };
                    if let Some(y2) = down {
                        pairs += 1;
                        hits += v(x, y) * v(x, y2);
                    }
                }
            }
            hits as f64 / pairs as f64
        })
        .collect();
    Ok(out)
}

/// Mean intensity per pixel of one channel. Unlike [`porosity`] this accepts
/// stacked units.
pub fn mean_intensity(grid: &IntensityGrid, channel: usize) -> f64 {
    grid.total_intensity(channel) as f64 / grid.num_pixels() as f64
}

/// Pixelwise mean of several `S₂` curves.
pub fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    let mut out = vec![0.0; first.len()];
    for c in curves {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= curves.len() as f64);
    out
}

/// CSV `lag,S2`.
pub fn s2_csv(s2: &[f64]) -> String {
    let mut s = String::from("lag,S2\n");
    for (lag, v) in s2.iter().enumerate() {
        let _ = writeln!(s, "{lag},{v}");
    }
    s
}
