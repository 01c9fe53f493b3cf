//! Grid and particle data model.
//!
//! An [`IntensityGrid`] holds non-negative integer intensities; each unit of
//! intensity is one particle. A [`ParticleLedger`] records, per channel, where
//! every particle started and where it currently is.

mod pnm;

pub use pnm::{decode_pnm, encode_pnm, load_image, read_pnm, save_image, save_image_with_maxval};

use crate::error::{Error, Result};

/// Integer pixel coordinate, `x` in `0..width`, `y` in `0..height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Pixel { x, y }
    }
}

/// One of the four nearest-neighbour unit displacements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl Direction {
    /// Canonical order; also the direction-major order of every rate field.
    pub const ALL: [Direction; 4] = [
        Direction::PlusX,
        Direction::MinusX,
        Direction::PlusY,
        Direction::MinusY,
    ];

    pub const fn offset(self) -> (isize, isize) {
        match self {
            Direction::PlusX => (1, 0),
            Direction::MinusX => (-1, 0),
            Direction::PlusY => (0, 1),
            Direction::MinusY => (0, -1),
        }
    }

    pub const fn reverse(self) -> Direction {
        match self {
            Direction::PlusX => Direction::MinusX,
            Direction::MinusX => Direction::PlusX,
            Direction::PlusY => Direction::MinusY,
            Direction::MinusY => Direction::PlusY,
        }
    }

    pub const fn index(self) -> usize {
        match self {
            Direction::PlusX => 0,
            Direction::MinusX => 1,
            Direction::PlusY => 2,
            Direction::MinusY => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Direction::ALL.get(i).copied()
    }
}

/// Lattice edge behaviour shared by the forward kernel, the reverse rates and
/// the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryCondition {
    /// Reflecting edges: jumps out of the domain have zero rate.
    NoFlux,
    /// Wraparound edges.
    Periodic,
}

impl BoundaryCondition {
    /// The pixel reached by a unit step from `p`, or `None` when the step
    /// leaves a no-flux domain.
    pub fn neighbor(self, p: Pixel, dir: Direction, width: usize, height: usize) -> Option<Pixel> {
        let (dx, dy) = dir.offset();
        let x = p.x as isize + dx;
        let y = p.y as isize + dy;
        let (w, h) = (width as isize, height as isize);
        match self {
            BoundaryCondition::Periodic => Some(Pixel::new(
                x.rem_euclid(w) as usize,
                y.rem_euclid(h) as usize,
            )),
            BoundaryCondition::NoFlux => {
                if x < 0 || y < 0 || x >= w || y >= h {
                    None
                } else {
                    Some(Pixel::new(x as usize, y as usize))
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BoundaryCondition::NoFlux => 0,
            BoundaryCondition::Periodic => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BoundaryCondition::NoFlux),
            1 => Some(BoundaryCondition::Periodic),
            _ => None,
        }
    }
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "noflux" | "no-flux" | "reflecting" => Ok(BoundaryCondition::NoFlux),
            "periodic" => Ok(BoundaryCondition::Periodic),
            other => Err(Error::InvalidParameter(format!(
                "unknown boundary condition {other:?} (expected periodic or noflux)"
            ))),
        }
    }
}

/// W×H×C field of non-negative integer intensities.
///
/// Values are stored pixel-major with channels interleaved, i.e. the same
/// order as a binary PPM payload: index `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntensityGrid {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<u64>,
}

impl IntensityGrid {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(width > 0 && height > 0 && channels > 0, "grid dimensions must be positive");
        IntensityGrid {
            width,
            height,
            channels,
            values: vec![0; width * height * channels],
        }
    }

    pub fn from_values(width: usize, height: usize, channels: usize, values: Vec<u64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if values.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{channels} grid needs {} values, got {}",
                width * height * channels,
                values.len()
            )));
        }
        let grid = IntensityGrid {
            width,
            height,
            channels,
            values,
        };
        for c in 0..channels {
            grid.checked_total(c).ok_or_else(|| {
                Error::InvalidParameter(format!("channel {c} total exceeds 2^63-1"))
            })?;
        }
        Ok(grid)
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

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<u64> {
        self.values
    }

    pub fn same_shape(&self, other: &IntensityGrid) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u64 {
        self.values[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u64) {
        let i = self.index(x, y, c);
        self.values[i] = v;
    }

    #[inline]
    pub(crate) fn add(&mut self, p: Pixel, c: usize, n: u64) {
        let i = self.index(p.x, p.y, c);
        self.values[i] += n;
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn check_pixel(&self, p: Pixel) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::PixelOutOfRange {
                x: p.x,
                y: p.y,
                width: self.width,
                height: self.height,
            })
        }
    }

    fn checked_total(&self, channel: usize) -> Option<u64> {
        let mut sum: u64 = 0;
        for v in self.values.iter().skip(channel).step_by(self.channels) {
            sum = sum.checked_add(*v)?;
        }
        (sum <= i64::MAX as u64).then_some(sum)
    }

    /// Exact number of particles in `channel`.
    pub fn total_intensity(&self, channel: usize) -> u64 {
        assert!(channel < self.channels, "channel {channel} out of range");
        self.checked_total(channel)
            .expect("channel total exceeds 2^63-1")
    }

    pub fn totals(&self) -> Vec<u64> {
        (0..self.channels).map(|c| self.total_intensity(c)).collect()
    }

    pub fn max_value(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Iterate `(pixel, channel, value)` over every nonzero entry.
    pub fn occupied(&self) -> impl Iterator<Item = (Pixel, usize, u64)> + '_ {
        let (w, c) = (self.width, self.channels);
        self.values.iter().enumerate().filter(|(_, v)| **v > 0).map(move |(i, v)| {
            let pix = i / c;
            (Pixel::new(pix % w, pix / w), i % c, *v)
        })
    }
}

/// A single particle: where it started and where it is now.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Particle {
    pub origin: Pixel,
    pub current: Pixel,
}

/// Per-channel list of particles produced by forward corruption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleLedger {
    width: usize,
    height: usize,
    channels: Vec<Vec<Particle>>,
}

impl ParticleLedger {
    pub fn new(width: usize, height: usize, channels: Vec<Vec<Particle>>) -> Self {
        ParticleLedger {
            width,
            height,
            channels,
        }
    }

    /// The ledger of an uncorrupted grid: each particle sits at its origin.
    /// Particles are listed in pixel order.
    pub fn at_rest(grid: &IntensityGrid) -> Self {
        let mut channels = vec![Vec::new(); grid.channels()];
        for (p, c, n) in grid.occupied() {
            channels[c].extend((0..n).map(|_| Particle {
                origin: p,
                current: p,
            }));
        }
        ParticleLedger::new(grid.width(), grid.height(), channels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[Particle] {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut Vec<Particle> {
        &mut self.channels[c]
    }

    pub fn len(&self, c: usize) -> usize {
        self.channels[c].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.iter().all(Vec::is_empty)
    }

    fn histogram(&self, pick: impl Fn(&Particle) -> Pixel) -> IntensityGrid {
        let mut g = IntensityGrid::zeros(self.width, self.height, self.channels.len().max(1));
        for (c, parts) in self.channels.iter().enumerate() {
            for p in parts {
                g.add(pick(p), c, 1);
            }
        }
        g
    }

    /// Histogram of current positions: the corrupted grid.
    pub fn current_grid(&self) -> IntensityGrid {
        self.histogram(|p| p.current)
    }

    /// Histogram of origins: the clean grid.
    pub fn origin_grid(&self) -> IntensityGrid {
        self.histogram(|p| p.origin)
    }

    /// Check that the current positions reproduce `grid` exactly.
    pub fn check_current(&self, grid: &IntensityGrid) -> Result<()> {
        if grid.width() != self.width || grid.height() != self.height || grid.channels() != self.channels.len() {
            return Err(Error::LedgerMismatch(format!(
                "ledger is {}x{}x{}, grid is {}x{}x{}",
                self.width,
                self.height,
                self.channels.len(),
                grid.width(),
                grid.height(),
                grid.channels()
            )));
        }
        let hist = self.current_grid();
        if let Some(i) = (0..hist.values.len()).find(|&i| hist.values[i] != grid.values[i]) {
            let pix = i / grid.channels;
            return Err(Error::LedgerMismatch(format!(
                "pixel ({},{}) channel {}: ledger holds {}, grid holds {}",
                pix % grid.width,
                pix / grid.width,
                i % grid.channels,
                hist.values[i],
                grid.values[i]
            )));
        }
        Ok(())
    }

    /// CSV with header `channel,x0,y0,x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,x0,y0,x,y\n");
        for (c, parts) in self.channels.iter().enumerate() {
            for p in parts {
                out.push_str(&format!(
                    "{c},{},{},{},{}\n",
                    p.origin.x, p.origin.y, p.current.x, p.current.y
                ));
            }
        }
        out
    }

    pub fn from_csv(text: &str, width: usize, height: usize, channels: usize) -> Result<Self> {
        let mut lists = vec![Vec::new(); channels];
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<usize> = line
                .split(',')
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Corrupt {
                    what: "ledger csv",
                    reason: format!("line {}: {e}", lineno + 1),
                })?;
            let [c, x0, y0, x, y] = fields[..] else {
                return Err(Error::Corrupt {
                    what: "ledger csv",
                    reason: format!("line {}: expected 5 fields", lineno + 1),
                });
            };
            if c >= channels || x0 >= width || x >= width || y0 >= height || y >= height {
                return Err(Error::Corrupt {
                    what: "ledger csv",
                    reason: format!("line {}: entry outside {width}x{height}x{channels}", lineno + 1),
                });
            }
            lists[c].push(Particle {
                origin: Pixel::new(x0, y0),
                current: Pixel::new(x, y),
            });
        }
        Ok(ParticleLedger::new(width, height, lists))
    }
}
