//! Exact reverse-time rates.
//!
//! A particle that started at `o` and now sits at `x` jumps to the neighbour
//! `x + ν̄` at rate `r · p_t(x + ν̄ | o) / p_t(x | o)`. The rate at which the
//! first of the `n` particles in a pixel leaves is the sum of their individual
//! rates, which is what a [`RateField`] stores.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::lattice::{Direction, IntensityGrid, Particle, ParticleLedger, Pixel};

/// Denominators below this are floored before dividing.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

const MAGIC: [u8; 4] = *b"DSDR";
const FORMAT_VERSION: u32 = 1;

/// Non-negative rates indexed by `(direction, x, y, channel)`.
///
/// Storage is direction-major followed by the grid's own pixel/channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct RateField {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RateField {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        RateField {
            width,
            height,
            channels,
            data: vec![0.0; 4 * width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        RateField {
            width,
            height,
            channels,
            data: vec![value; 4 * width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 4 * width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "rate field 4x{width}x{height}x{channels} needs {} values, got {}",
                4 * width * height * channels,
                data.len()
            )));
        }
        Ok(RateField {
            width,
            height,
            channels,
            data,
        })
    }

    /// Zero field shaped like `grid`.
    pub fn like(grid: &IntensityGrid) -> Self {
        Self::zeros(grid.width(), grid.height(), grid.channels())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &RateField) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn matches_grid(&self, grid: &IntensityGrid) -> bool {
        self.width == grid.width() && self.height == grid.height() && self.channels == grid.channels()
    }

    #[inline]
    pub fn index(&self, dir: Direction, x: usize, y: usize, c: usize) -> usize {
        ((dir.index() * self.height + y) * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, dir: Direction, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(dir, x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, dir: Direction, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(dir, x, y, c);
        self.data[i] = v;
    }

    #[inline]
    pub fn add(&mut self, dir: Direction, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(dir, x, y, c);
        self.data[i] += v;
    }

    pub fn max_rate(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// `DSDR`, version, W, H, C as little-endian u32, then f64 values in
    /// direction, x, y, c order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 8);
        out.extend_from_slice(&MAGIC);
        for v in [FORMAT_VERSION, self.width as u32, self.height as u32, self.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for d in Direction::ALL {
            for x in 0..self.width {
                for y in 0..self.height {
                    for c in 0..self.channels {
                        out.extend_from_slice(&self.get(d, x, y, c).to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 {
            return Err(Error::Corrupt {
                what: "rate field",
                reason: "shorter than the header".into(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic {
                what: "rate field",
                expected: MAGIC,
                found: magic,
            });
        }
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        if u(4) != FORMAT_VERSION as usize {
            return Err(Error::Corrupt {
                what: "rate field",
                reason: format!("unsupported version {}", u(4)),
            });
        }
        let (w, h, c) = (u(8), u(12), u(16));
        let body = &bytes[20..];
        if body.len() != 4 * w * h * c * 8 {
            return Err(Error::Corrupt {
                what: "rate field",
                reason: format!("payload is {} bytes, expected {}", body.len(), 4 * w * h * c * 8),
            });
        }
        let mut field = RateField::zeros(w, h, c);
        let mut vals = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        for d in Direction::ALL {
            for x in 0..w {
                for y in 0..h {
                    for ch in 0..c {
                        field.set(d, x, y, ch, vals.next().unwrap());
                    }
                }
            }
        }
        Ok(field)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Reverse rate of one particle in one direction.
pub fn per_particle_rate(
    kernel: &TransitionKernel,
    origin: Pixel,
    current: Pixel,
    dir: Direction,
    rate: f64,
) -> Result<f64> {
    let here = kernel.transition_prob(origin, current)?;
    if here <= 0.0 {
        return Err(Error::ZeroProbability {
            ox: origin.x,
            oy: origin.y,
            x: current.x,
            y: current.y,
        });
    }
    let Some(next) = kernel
        .boundary()
        .neighbor(current, dir, kernel.width(), kernel.height())
    else {
        return Ok(0.0);
    };
    Ok(rate * kernel.prob_unchecked(origin, next) / here.max(DENOMINATOR_FLOOR))
}

/// Reverse rates of one particle in all four directions, in
/// [`Direction::ALL`] order.
pub fn particle_rates(kernel: &TransitionKernel, particle: &Particle, rate: f64) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for d in Direction::ALL {
        out[d.index()] = per_particle_rate(kernel, particle.origin, particle.current, d, rate)?;
    }
    Ok(out)
}

/// Aggregated per-pixel reverse rates: the sum of [`per_particle_rate`] over
/// the particles of each channel currently at each pixel.
pub fn oracle_rates(
    ledger: &ParticleLedger,
    grid: &IntensityGrid,
    kernel: &TransitionKernel,
    rate: f64,
) -> Result<RateField> {
    ledger.check_current(grid)?;
    if kernel.width() != grid.width() || kernel.height() != grid.height() {
        return Err(Error::ShapeMismatch(format!(
            "kernel is {}x{}, grid is {}x{}",
            kernel.width(),
            kernel.height(),
            grid.width(),
            grid.height()
        )));
    }
    let mut field = RateField::like(grid);
    for c in 0..ledger.num_channels() {
        for p in ledger.channel(c) {
            let rates = particle_rates(kernel, p, rate)?;
            for d in Direction::ALL {
                field.add(d, p.current.x, p.current.y, c, rates[d.index()]);
            }
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::corrupt;
    use crate::kernel::{noflux_kernel, periodic_kernel};
    use crate::lattice::BoundaryCondition;
    use crate::rng;

    #[test]
    fn uniform_limit_gives_bare_rate() {
        let k = periodic_kernel(6, 6, 1.0, 1e4).unwrap();
        for d in Direction::ALL {
            let r = per_particle_rate(&k, Pixel::new(1, 1), Pixel::new(4, 2), d, 3.0).unwrap();
            assert!((r - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noflux_edge_has_zero_outward_rate() {
        let k = noflux_kernel(5, 5, 1.0, 0.3).unwrap();
        let r = per_particle_rate(&k, Pixel::new(2, 2), Pixel::new(0, 3), Direction::MinusX, 1.0).unwrap();
        assert_eq!(r, 0.0);
        let inward = per_particle_rate(&k, Pixel::new(2, 2), Pixel::new(0, 3), Direction::PlusX, 1.0).unwrap();
        assert!(inward > 0.0);
    }

    #[test]
    fn identical_origins_add_up() {
        let k = periodic_kernel(4, 4, 1.0, 0.2).unwrap();
        let o = Pixel::new(0, 0);
        let cur = Pixel::new(1, 0);
        let single = particle_rates(&k, &Particle { origin: o, current: cur }, 2.0).unwrap();
        let n = 3;
        let ledger = ParticleLedger::new(4, 4, vec![vec![Particle { origin: o, current: cur }; n]]);
        let grid = ledger.current_grid();
        let field = oracle_rates(&ledger, &grid, &k, 2.0).unwrap();
        for d in Direction::ALL {
            let agg = field.get(d, 1, 0, 0);
            assert!((agg - n as f64 * single[d.index()]).abs() <= 1e-12 * agg.abs());
        }
    }

    #[test]
    fn empty_pixels_have_zero_rate_and_channels_are_independent() {
        let grid = IntensityGrid::from_values(4, 3, 2, (0..24).map(|i| (i % 5 == 0) as u64 * 2).collect()).unwrap();
        let k = noflux_kernel(4, 3, 1.0, 0.4).unwrap();
        let (noisy, ledger) = corrupt(&grid, &k, &mut rng::stream(11, &[])).unwrap();
        let field = oracle_rates(&ledger, &noisy, &k, 1.0).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                for c in 0..2 {
                    for d in Direction::ALL {
                        let v = field.get(d, x, y, c);
                        assert!(v.is_finite() && v >= 0.0);
                        if noisy.get(x, y, c) == 0 {
                            assert_eq!(v, 0.0);
                        }
                    }
                }
            }
        }
        // Dropping channel 1 particles leaves channel 0 rates untouched.
        let mut only0 = ledger.clone();
        only0.channel_mut(1).clear();
        let field0 = oracle_rates(&only0, &only0.current_grid(), &k, 1.0).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                for d in Direction::ALL {
                    assert_eq!(field0.get(d, x, y, 0), field.get(d, x, y, 0));
                    assert_eq!(field0.get(d, x, y, 1), 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_probability_position_is_an_error() {
        let k = noflux_kernel(4, 4, 1.0, 0.0).unwrap();
        assert!(matches!(
            per_particle_rate(&k, Pixel::new(0, 0), Pixel::new(1, 0), Direction::PlusX, 1.0),
            Err(Error::ZeroProbability { .. })
        ));
    }

    #[test]
    fn ledger_grid_mismatch_is_rejected() {
        let k = periodic_kernel(3, 3, 1.0, 0.1).unwrap();
        let g = IntensityGrid::from_values(3, 3, 1, vec![1, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let ledger = ParticleLedger::at_rest(&IntensityGrid::zeros(3, 3, 1));
        assert!(matches!(oracle_rates(&ledger, &g, &k, 1.0), Err(Error::LedgerMismatch(_))));
        let _ = BoundaryCondition::Periodic;
    }

    #[test]
    fn serialization_order_and_round_trip() {
        let mut f = RateField::zeros(2, 3, 2);
        for (i, v) in f.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.5;
        }
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], b"DSDR");
        // Second value in the file is (dir 0, x 0, y 0, c 1); third is (dir 0, x 0, y 1, c 0).
        let at = |i: usize| f64::from_le_bytes(bytes[20 + 8 * i..28 + 8 * i].try_into().unwrap());
        assert_eq!(at(1), f.get(Direction::PlusX, 0, 0, 1));
        assert_eq!(at(2), f.get(Direction::PlusX, 0, 1, 0));
        assert_eq!(RateField::from_bytes(&bytes).unwrap(), f);
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(RateField::from_bytes(&bad).is_err());
        assert!(RateField::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
