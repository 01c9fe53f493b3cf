//! Reverse-time generation by binomial τ-leaping with a CFL-limited step.
//!
//! Each step evaluates the predictor once, picks
//! `τ = min(t, ε / max rate)`, and for every occupied pixel draws the number of
//! movers from a binomial and splits them across directions with a
//! multinomial. Movers never exceed occupancy, so populations stay
//! non-negative and per-channel totals are conserved exactly.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::lattice::{BoundaryCondition, Direction, IntensityGrid, Pixel};
use crate::rate_model::RatePredictor;
use crate::reverse::RateField;
use crate::rng::{self, Stream};

const INIT_KEY: u64 = 0;
const STEP_KEY: u64 = 1;

/// Default cap on reverse-time steps.
pub const DEFAULT_MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub width: usize,
    pub height: usize,
    /// CFL tolerance in `(0, 1)`.
    pub epsilon: f64,
    pub boundary: BoundaryCondition,
    /// Forward rate `r`; sets the `t = 1` noise kernel.
    pub rate: f64,
    /// Exact particle count per channel.
    pub totals: Vec<u64>,
    /// Frozen pixels, `mask[y * width + x]`.
    pub mask: Option<Vec<bool>>,
    pub max_steps: usize,
}

impl SamplerConfig {
    pub fn new(width: usize, height: usize, totals: Vec<u64>, boundary: BoundaryCondition, rate: f64, epsilon: f64) -> Self {
        SamplerConfig {
            width,
            height,
            epsilon,
            boundary,
            rate,
            totals,
            mask: None,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.totals.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "CFL tolerance must lie in (0,1), got {}",
                self.epsilon
            )));
        }
        if self.width == 0 || self.height == 0 || self.totals.is_empty() {
            return Err(Error::InvalidParameter("sampler needs a non-empty lattice and at least one channel".into()));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate must be >= 0, got {}", self.rate)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        if let Some(m) = &self.mask {
            if m.len() != self.width * self.height {
                return Err(Error::ShapeMismatch(format!(
                    "mask has {} entries for a {}x{} lattice",
                    m.len(),
                    self.width,
                    self.height
                )));
            }
        }
        Ok(())
    }
}

/// `count` particles of `channel` leave `pixel` in `direction` during one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub pixel: Pixel,
    pub channel: usize,
    pub direction: Direction,
    pub count: u64,
}

/// One row of the optional per-step trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub tau: f64,
    pub max_rate: f64,
    pub totals: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub grid: IntensityGrid,
    pub trace: Vec<TraceRow>,
}

impl Generation {
    pub fn steps(&self) -> usize {
        self.trace.len()
    }

    /// CSV `step,t,tau,max_rate,total_intensity_per_channel`, totals joined
    /// with `;`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,t,tau,max_rate,total_intensity_per_channel\n");
        for row in &self.trace {
            let totals: Vec<String> = row.totals.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{},{:e},{:e},{:e},{}", row.step, row.t, row.tau, row.max_rate, totals.join(";"));
        }
        s
    }
}

fn is_frozen(mask: Option<&[bool]>, p: Pixel, width: usize) -> bool {
    mask.is_some_and(|m| m[p.y * width + p.x])
}

/// Zero every rate that cannot fire: out of the domain, out of or into a
/// frozen pixel, or out of an empty pixel.
pub fn effective_rates(
    rates: &RateField,
    grid: &IntensityGrid,
    boundary: BoundaryCondition,
    mask: Option<&[bool]>,
) -> Result<RateField> {
    if !rates.matches_grid(grid) {
        return Err(Error::ShapeMismatch(format!(
            "rate field 4x{}x{}x{} does not match grid {}x{}x{}",
            rates.width(),
            rates.height(),
            rates.channels(),
            grid.width(),
            grid.height(),
            grid.channels()
        )));
    }
    let (w, h) = (grid.width(), grid.height());
    let mut out = rates.clone();
    for y in 0..h {
        for x in 0..w {
            let p = Pixel::new(x, y);
            let frozen = is_frozen(mask, p, w);
            for d in Direction::ALL {
                let blocked = frozen
                    || match boundary.neighbor(p, d, w, h) {
                        None => true,
                        Some(q) => is_frozen(mask, q, w),
                    };
                for c in 0..grid.channels() {
                    if blocked || grid.get(x, y, c) == 0 {
                        out.set(d, x, y, c, 0.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `τ = min(t, ε / max rate)`; `τ = t` when every rate is zero.
pub fn cfl_step(rates: &RateField, t: f64, epsilon: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("cfl_step needs t > 0, got {t}")));
    }
    let mut max = 0.0f64;
    for (i, &v) in rates.data().iter().enumerate() {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidRate { index: i, value: v });
        }
        max = max.max(v);
    }
    if max == 0.0 {
        return Ok(t);
    }
    Ok(t.min(epsilon / max))
}

/// One binomial τ-leap. Returns the new grid and the moves that produced it.
///
/// A pixel holding `n` particles with aggregated outgoing rate `Σ` loses
/// `Binomial(n, min(1, τΣ/n))` of them, split across directions by a
/// multinomial with weights proportional to the directional rates.
pub fn tau_leap_moves<R: Rng + ?Sized>(
    grid: &IntensityGrid,
    rates: &RateField,
    tau: f64,
    boundary: BoundaryCondition,
    mask: Option<&[bool]>,
    rng: &mut R,
) -> Result<(IntensityGrid, Vec<Move>)> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be finite and >= 0, got {tau}")));
    }
    let rates = effective_rates(rates, grid, boundary, mask)?;
    let (w, h, chans) = (grid.width(), grid.height(), grid.channels());
    let mut next = grid.clone();
    let mut moves = Vec::new();
    if tau == 0.0 {
        return Ok((next, moves));
    }
    let mut arrivals = IntensityGrid::zeros(w, h, chans);
    for y in 0..h {
        for x in 0..w {
            for c in 0..chans {
                let n = grid.get(x, y, c);
                if n == 0 {
                    continue;
                }
                let dir_rates: [f64; 4] = Direction::ALL.map(|d| rates.get(d, x, y, c));
                if let Some((i, v)) = dir_rates.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
                    return Err(Error::InvalidRate { index: rates.index(Direction::ALL[i], x, y, c), value: *v });
                }
                let total: f64 = dir_rates.iter().sum();
                if total == 0.0 {
                    continue;
                }
                let p = (tau * total / n as f64).min(1.0);
                let movers = Binomial::new(n, p).expect("valid binomial").sample(rng);
                if movers == 0 {
                    continue;
                }
                let here = Pixel::new(x, y);
                let last = (0..4).rev().find(|&i| dir_rates[i] > 0.0).unwrap_or(0);
                let mut remaining = movers;
                let mut weight_left = total;
                for d in Direction::ALL {
                    if remaining == 0 {
                        break;
                    }
                    let rd = dir_rates[d.index()];
                    if rd == 0.0 {
                        continue;
                    }
                    // the last positive direction takes the rest, whatever
                    // round-off did to `weight_left`
                    let share = if d.index() == last || rd >= weight_left { 1.0 } else { rd / weight_left };
                    let k = if share >= 1.0 {
                        remaining
                    } else {
                        Binomial::new(remaining, share).expect("valid binomial").sample(rng)
                    };
                    weight_left -= rd;
                    if k == 0 {
                        continue;
                    }
                    remaining -= k;
                    let dest = boundary
                        .neighbor(here, d, w, h)
                        .expect("effective rates are zero out of the domain");
                    arrivals.add(dest, c, k);
                    moves.push(Move {
                        pixel: here,
                        channel: c,
                        direction: d,
                        count: k,
                    });
                }
                debug_assert_eq!(remaining, 0);
                let i = next.index(x, y, c);
                let left = next.values()[i] - movers;
                next.set(x, y, c, left);
            }
        }
    }
    let merged: Vec<u64> = next
        .values()
        .iter()
        .zip(arrivals.values())
        .map(|(a, b)| a + b)
        .collect();
    let next = IntensityGrid::from_values(w, h, chans, merged)?;
    Ok((next, moves))
}

/// [`tau_leap_moves`] without the move list.
pub fn tau_leap_step<R: Rng + ?Sized>(
    grid: &IntensityGrid,
    rates: &RateField,
    tau: f64,
    boundary: BoundaryCondition,
    mask: Option<&[bool]>,
    rng: &mut R,
) -> Result<IntensityGrid> {
    tau_leap_moves(grid, rates, tau, boundary, mask, rng).map(|(g, _)| g)
}

/// Fully corrupted starting configuration: units placed uniformly at random
/// and then moved once by the `t = 1` kernel.
pub fn init_noise<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    totals: &[u64],
    kernel: &TransitionKernel,
    rng: &mut R,
) -> Result<IntensityGrid> {
    if kernel.width() != width || kernel.height() != height {
        return Err(Error::ShapeMismatch(format!(
            "kernel is {}x{}, requested {width}x{height}",
            kernel.width(),
            kernel.height()
        )));
    }
    let mut g = IntensityGrid::zeros(width, height, totals.len().max(1));
    for (c, &n) in totals.iter().enumerate() {
        for _ in 0..n {
            let start = Pixel::new(rng.random_range(0..width), rng.random_range(0..height));
            g.add(kernel.sample_destination(start, rng), c, 1);
        }
    }
    Ok(g)
}

/// Integrate the reverse process from `start` at `t = 1` down to `t = 0`.
pub fn run_reverse<P: RatePredictor + ?Sized>(
    predictor: &mut P,
    start: IntensityGrid,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Generation> {
    config.validate()?;
    if start.width() != config.width || start.height() != config.height {
        return Err(Error::ShapeMismatch(format!(
            "start grid is {}x{}, config is {}x{}",
            start.width(),
            start.height(),
            config.width,
            config.height
        )));
    }
    let totals = start.totals();
    let mask = config.mask.as_deref();
    let mut grid = start;
    let mut t = 1.0f64;
    let mut trace = Vec::new();
    let mut step = 0usize;
    while t > 0.0 {
        if step >= config.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: config.max_steps,
                t,
            });
        }
        let raw = predictor.predict(&grid, t)?;
        let rates = effective_rates(&raw, &grid, config.boundary, mask)?;
        let tau = cfl_step(&rates, t, config.epsilon)?;
        let mut r: Stream = rng::stream(seed, &[STEP_KEY, step as u64]);
        let (next, moves) = tau_leap_moves(&grid, &rates, tau, config.boundary, mask, &mut r)?;
        predictor.observe_moves(&moves, &mut r)?;
        let now = next.totals();
        assert_eq!(now, totals, "tau-leap step changed per-channel totals");
        trace.push(TraceRow {
            step,
            t,
            tau,
            max_rate: rates.max_rate(),
            totals: now,
        });
        grid = next;
        t = if tau >= t { 0.0 } else { t - tau };
        step += 1;
    }
    Ok(Generation { grid, trace })
}

/// Generate one sample with exactly `config.totals` particles per channel.
///
/// The starting state is the predictor's own, if it has one (the oracle
/// predictor starts from its corrupted ledger), otherwise fresh noise.
pub fn generate<P: RatePredictor + ?Sized>(predictor: &mut P, config: &SamplerConfig, seed: u64) -> Result<Generation> {
    config.validate()?;
    let start = match predictor.initial_state() {
        Some(g) => {
            if g.totals() != config.totals {
                return Err(Error::InvalidParameter(format!(
                    "predictor start state holds {:?} particles, config asks for {:?}",
                    g.totals(),
                    config.totals
                )));
            }
            g
        }
        None => {
            let kernel = TransitionKernel::new(config.boundary, config.width, config.height, config.rate, 1.0)?;
            let mut r = rng::stream(seed, &[INIT_KEY]);
            init_noise(config.width, config.height, &config.totals, &kernel, &mut r)?
        }
    };
    run_reverse(predictor, start, config, seed)
}

/// Regenerate the free (unmasked) region of `partial` with exactly
/// `region_totals` particles per channel while frozen pixels stay fixed.
///
/// Free-region particles start uniformly distributed over the free pixels,
/// the stationary law of a reflecting walk confined to that region.
pub fn inpaint<P: RatePredictor + ?Sized>(
    predictor: &mut P,
    partial: &IntensityGrid,
    mask: &[bool],
    region_totals: &[u64],
    config: &SamplerConfig,
    seed: u64,
) -> Result<IntensityGrid> {
    let (w, h) = (partial.width(), partial.height());
    if mask.len() != w * h {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries for a {w}x{h} grid",
            mask.len()
        )));
    }
    if region_totals.len() != partial.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} region totals for {} channels",
            region_totals.len(),
            partial.channels()
        )));
    }
    let free: Vec<Pixel> = (0..h)
        .flat_map(|y| (0..w).map(move |x| Pixel::new(x, y)))
        .filter(|p| !mask[p.y * w + p.x])
        .collect();
    let mut start = IntensityGrid::zeros(w, h, partial.channels());
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                for c in 0..partial.channels() {
                    start.set(x, y, c, partial.get(x, y, c));
                }
            }
        }
    }
    let mut r = rng::stream(seed, &[INIT_KEY]);
    for (c, &n) in region_totals.iter().enumerate() {
        if n > 0 && free.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "channel {c} asks for {n} free-region particles but every pixel is frozen"
            )));
        }
        for _ in 0..n {
            start.add(free[r.random_range(0..free.len())], c, 1);
        }
    }
    let mut cfg = config.clone();
    cfg.width = w;
    cfg.height = h;
    cfg.totals = start.totals();
    cfg.mask = Some(mask.to_vec());
    run_reverse(predictor, start, &cfg, seed).map(|g| g.grid)
}
