//! Rate predictors: the interface the sampler drives, the exact oracle, and a
//! small trainable convolutional model.

mod conv;
mod train;

pub use conv::{percentile_scale, ToyConvModel, DEFAULT_HIDDEN};
pub use train::{train, train_with_progress, Optimizer, TrainConfig, TrainReport};

use rand::Rng;

use crate::error::{Error, Result};
use crate::forward::corrupt;
use crate::kernel::TransitionKernel;
use crate::lattice::{BoundaryCondition, Direction, IntensityGrid, ParticleLedger};
use crate::reverse::{particle_rates, RateField};
use crate::rng::Stream;
use crate::sampler::Move;

/// Maps a corrupted grid at time `t` to non-negative reverse rates.
pub trait RatePredictor {
    fn predict(&mut self, grid: &IntensityGrid, t: f64) -> Result<RateField>;

    /// A predictor-specific `t = 1` state. `None` means the sampler draws
    /// fresh noise.
    fn initial_state(&self) -> Option<IntensityGrid> {
        None
    }

    /// Called after every step with the moves that were applied.
    fn observe_moves(&mut self, _moves: &[Move], _rng: &mut Stream) -> Result<()> {
        Ok(())
    }
}

impl<P: RatePredictor + ?Sized> RatePredictor for &mut P {
    fn predict(&mut self, grid: &IntensityGrid, t: f64) -> Result<RateField> {
        (**self).predict(grid, t)
    }

    fn initial_state(&self) -> Option<IntensityGrid> {
        (**self).initial_state()
    }

    fn observe_moves(&mut self, moves: &[Move], rng: &mut Stream) -> Result<()> {
        (**self).observe_moves(moves, rng)
    }
}

/// Same rate everywhere. Useful for exercising the sampler.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor {
    pub rate: f64,
}

impl ConstantPredictor {
    pub fn new(rate: f64) -> Self {
        ConstantPredictor { rate }
    }
}

impl RatePredictor for ConstantPredictor {
    fn predict(&mut self, grid: &IntensityGrid, _t: f64) -> Result<RateField> {
        Ok(RateField::filled(grid.width(), grid.height(), grid.channels(), self.rate))
    }
}

/// Exact reverse rates from a particle ledger.
///
/// The ledger is advanced along with the sampler: when `k` particles leave a
/// pixel in some direction, the movers are chosen among its residents with
/// probability proportional to their individual rates. Driven this way the
/// sampler integrates the true reverse process and converges on the clean
/// grid the ledger was corrupted from.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    ledger: ParticleLedger,
    start: IntensityGrid,
    boundary: BoundaryCondition,
    rate: f64,
    // per-particle rates from the latest `predict`, by channel
    last: Vec<Vec<[f64; 4]>>,
}

impl OraclePredictor {
    pub fn new(ledger: ParticleLedger, boundary: BoundaryCondition, rate: f64) -> Self {
        let start = ledger.current_grid();
        OraclePredictor {
            ledger,
            start,
            boundary,
            rate,
            last: Vec::new(),
        }
    }

    /// Corrupt `clean` to `t = 1` and wrap the resulting ledger.
    pub fn from_clean<R: Rng + ?Sized>(
        clean: &IntensityGrid,
        boundary: BoundaryCondition,
        rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let kernel = TransitionKernel::new(boundary, clean.width(), clean.height(), rate, 1.0)?;
        let (_, ledger) = corrupt(clean, &kernel, rng)?;
        Ok(Self::new(ledger, boundary, rate))
    }

    pub fn ledger(&self) -> &ParticleLedger {
        &self.ledger
    }
}

/// Oracle predictor for a ledger that may be absent.
pub fn oracle_predictor(
    ledger: Option<ParticleLedger>,
    boundary: BoundaryCondition,
    rate: f64,
) -> Result<OraclePredictor> {
    ledger
        .map(|l| OraclePredictor::new(l, boundary, rate))
        .ok_or_else(|| Error::InvalidParameter("the oracle predictor needs a particle ledger".into()))
}

impl RatePredictor for OraclePredictor {
    fn predict(&mut self, grid: &IntensityGrid, t: f64) -> Result<RateField> {
        self.ledger.check_current(grid)?;
        let kernel = TransitionKernel::new(self.boundary, grid.width(), grid.height(), self.rate, t)?;
        let mut field = RateField::like(grid);
        self.last.clear();
        for c in 0..self.ledger.num_channels() {
            let mut rates = Vec::with_capacity(self.ledger.len(c));
            for p in self.ledger.channel(c) {
                let r = particle_rates(&kernel, p, self.rate)?;
                for d in Direction::ALL {
                    field.add(d, p.current.x, p.current.y, c, r[d.index()]);
                }
                rates.push(r);
            }
            self.last.push(rates);
        }
        Ok(field)
    }

    fn initial_state(&self) -> Option<IntensityGrid> {
        Some(self.start.clone())
    }

    fn observe_moves(&mut self, moves: &[Move], rng: &mut Stream) -> Result<()> {
        if moves.is_empty() {
            return Ok(());
        }
        if self.last.len() != self.ledger.num_channels() {
            return Err(Error::LedgerMismatch("moves observed before any prediction".into()));
        }
        let (w, h) = (self.ledger.width(), self.ledger.height());
        // Residents per (pixel, channel) at the start of the step.
        let mut residents: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); w * h]; self.ledger.num_channels()];
        for (c, res) in residents.iter_mut().enumerate() {
            for (i, p) in self.ledger.channel(c).iter().enumerate() {
                res[p.current.y * w + p.current.x].push(i);
            }
        }
        let mut moved: Vec<Vec<bool>> = (0..self.ledger.num_channels())
            .map(|c| vec![false; self.ledger.len(c)])
            .collect();
        let mut targets = Vec::new();
        for m in moves {
            let c = m.channel;
            let d = m.direction.index();
            let cell = &residents[c][m.pixel.y * w + m.pixel.x];
            let dest = self
                .boundary
                .neighbor(m.pixel, m.direction, w, h)
                .ok_or_else(|| Error::LedgerMismatch(format!("move leaves the domain at ({},{})", m.pixel.x, m.pixel.y)))?;
            for _ in 0..m.count {
                let free: Vec<usize> = cell.iter().copied().filter(|&i| !moved[c][i]).collect();
                if free.is_empty() {
                    return Err(Error::LedgerMismatch(format!(
                        "more movers than residents at ({},{}) channel {c}",
                        m.pixel.x, m.pixel.y
                    )));
                }
                let total: f64 = free.iter().map(|&i| self.last[c][i][d]).sum();
                let pick = if total > 0.0 {
                    let mut u = rng.random::<f64>() * total;
                    let mut chosen = *free.last().unwrap();
                    for &i in &free {
                        let wgt = self.last[c][i][d];
                        if u < wgt {
                            chosen = i;
                            break;
                        }
                        u -= wgt;
                    }
                    chosen
                } else {
                    free[rng.random_range(0..free.len())]
                };
                moved[c][pick] = true;
                targets.push((c, pick, dest));
            }
        }
        for (c, i, dest) in targets {
            self.ledger.channel_mut(c)[i].current = dest;
        }
        Ok(())
    }
}

impl RatePredictor for ToyConvModel {
    fn predict(&mut self, grid: &IntensityGrid, t: f64) -> Result<RateField> {
        self.forward_pass(grid, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reverse::oracle_rates;
    use crate::rng;
    use crate::sampler::{generate, SamplerConfig};

    fn clean() -> IntensityGrid {
        let mut g = IntensityGrid::zeros(8, 8, 1);
        for (x, y) in [(1, 1), (2, 1), (5, 5), (6, 2), (3, 6)] {
            g.set(x, y, 0, 1);
        }
        g.set(4, 4, 0, 2);
        g
    }

    #[test]
    fn matches_oracle_rates() {
        let mut r = rng::stream(1, &[]);
        let mut p = OraclePredictor::from_clean(&clean(), BoundaryCondition::NoFlux, 10.0, &mut r).unwrap();
        let grid = p.initial_state().unwrap();
        let got = p.predict(&grid, 0.4).unwrap();
        let k = TransitionKernel::new(BoundaryCondition::NoFlux, 8, 8, 10.0, 0.4).unwrap();
        let want = oracle_rates(p.ledger(), &grid, &k, 10.0).unwrap();
        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn missing_ledger_is_an_error() {
        assert!(oracle_predictor(None, BoundaryCondition::Periodic, 1.0).is_err());
    }

    #[test]
    fn oracle_generation_tracks_the_grid() {
        let mut r = rng::stream(2, &[]);
        let mut p = OraclePredictor::from_clean(&clean(), BoundaryCondition::Periodic, 10.0, &mut r).unwrap();
        let cfg = SamplerConfig::new(8, 8, vec![7], BoundaryCondition::Periodic, 10.0, 0.05);
        let out = generate(&mut p, &cfg, 3).unwrap();
        assert_eq!(out.grid, p.ledger().current_grid());
        assert_eq!(out.grid.totals(), vec![7]);
    }
}
