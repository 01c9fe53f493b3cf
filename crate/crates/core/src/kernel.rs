//! Forward transition kernels of the single-particle jump process.
//!
//! Periodic lattices are diagonal in Fourier space: the kernel is the inverse
//! 2D DFT of `exp(-4rt[sin²(πm/W) + sin²(πn/H)])`. No-flux lattices factor
//! into two 1D reflecting-walk exponentials, each diagonalised by the DCT-II
//! basis `cos(πk(j+½)/N)` with eigenvalues `-4 sin²(πk/2N)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, Pixel};

const MAGIC: [u8; 4] = *b"DSDK";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// `probs[dy * W + dx]` is the probability of displacement `(dx, dy)`.
    Periodic { probs: Vec<f64>, cdf: Vec<f64> },
    /// Row-major 1D kernels: `kx[x0 * W + x]`, `ky[y0 * H + y]`.
    NoFlux {
        kx: Vec<f64>,
        ky: Vec<f64>,
        kx_cdf: Vec<f64>,
        ky_cdf: Vec<f64>,
    },
}

/// `p_t(x, y | x0, y0)` for one boundary condition, rate and time.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    boundary: BoundaryCondition,
    rate: f64,
    time: f64,
    width: usize,
    height: usize,
    repr: Repr,
}

fn check_params(width: usize, height: usize, rate: f64, time: f64) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "lattice must be at least 1x1, got {width}x{height}"
        )));
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::InvalidParameter(format!("rate must be finite and >= 0, got {rate}")));
    }
    if !(time.is_finite() && time >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be finite and >= 0, got {time}")));
    }
    Ok(())
}

fn clamp_and_normalize(row: &mut [f64]) {
    for p in row.iter_mut() {
        *p = p.clamp(0.0, 1.0);
    }
    let s: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= s;
    }
}

fn cumulative(rows: &[f64], row_len: usize) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(rows.len());
    for row in rows.chunks_exact(row_len) {
        let mut acc = 0.0;
        for &p in row {
            acc += p;
            cdf.push(acc);
        }
    }
    cdf
}

/// Inverse-CDF draw from one cumulative row, never landing on a
/// zero-probability entry.
fn draw(cdf: &[f64], u: f64) -> usize {
    let i = cdf.partition_point(|&c| c <= u);
    if i < cdf.len() {
        i
    } else {
        // u above the rounded total: take the last entry with positive mass.
        let last = cdf[cdf.len() - 1];
        cdf.partition_point(|&c| c < last)
    }
}

/// `exp(rt L)` for the 1D reflecting walk on `n` sites, row-major `n×n`.
fn reflecting_exponential(n: usize, rt: f64) -> Vec<f64> {
    let nf = n as f64;
    let decay: Vec<f64> = (0..n)
        .map(|k| (-4.0 * rt * (PI * k as f64 / (2.0 * nf)).sin().powi(2)).exp())
        .collect();
    // Orthonormal DCT-II basis, basis[k * n + j].
    let basis: Vec<f64> = (0..n)
        .flat_map(|k| {
            let norm = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            (0..n).map(move |j| norm * (PI * k as f64 * (j as f64 + 0.5) / nf).cos())
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..n).map(|k| basis[k * n + i] * decay[k] * basis[k * n + j]).sum();
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    for row in out.chunks_exact_mut(n) {
        clamp_and_normalize(row);
    }
    out
}

impl TransitionKernel {
    pub fn new(boundary: BoundaryCondition, width: usize, height: usize, rate: f64, time: f64) -> Result<Self> {
        match boundary {
            BoundaryCondition::Periodic => periodic_kernel(width, height, rate, time),
            BoundaryCondition::NoFlux => noflux_kernel(width, height, rate, time),
        }
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.boundary
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Probability of moving `from -> to`; no bounds checks.
    #[inline]
    pub fn prob_unchecked(&self, from: Pixel, to: Pixel) -> f64 {
        let (w, h) = (self.width, self.height);
        match &self.repr {
            Repr::Periodic { probs, .. } => {
                let dx = (to.x + w - from.x) % w;
                let dy = (to.y + h - from.y) % h;
                probs[dy * w + dx]
            }
            Repr::NoFlux { kx, ky, .. } => kx[from.x * w + to.x] * ky[from.y * h + to.y],
        }
    }

    pub fn transition_prob(&self, from: Pixel, to: Pixel) -> Result<f64> {
        for p in [from, to] {
            if p.x >= self.width || p.y >= self.height {
                return Err(Error::PixelOutOfRange {
                    x: p.x,
                    y: p.y,
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(self.prob_unchecked(from, to))
    }

    /// Draw a destination for a particle starting at `from`.
    pub fn sample_destination<R: Rng + ?Sized>(&self, from: Pixel, rng: &mut R) -> Pixel {
        let (w, h) = (self.width, self.height);
        match &self.repr {
            Repr::Periodic { cdf, .. } => {
                let d = draw(cdf, rng.random::<f64>());
                Pixel::new((from.x + d % w) % w, (from.y + d / w) % h)
            }
            Repr::NoFlux { kx_cdf, ky_cdf, .. } => {
                let x = draw(&kx_cdf[from.x * w..(from.x + 1) * w], rng.random::<f64>());
                let y = draw(&ky_cdf[from.y * h..(from.y + 1) * h], rng.random::<f64>());
                Pixel::new(x, y)
            }
        }
    }

    /// Largest `|Σ_dest p - 1|` over all sources.
    pub fn max_row_sum_deviation(&self) -> f64 {
        match &self.repr {
            Repr::Periodic { probs, .. } => (probs.iter().sum::<f64>() - 1.0).abs(),
            Repr::NoFlux { kx, ky, .. } => {
                let dev = |k: &[f64], n: usize| {
                    k.chunks_exact(n)
                        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
                        .fold(0.0, f64::max)
                };
                // 2D row sum is the product of the 1D row sums.
                let (a, b) = (dev(kx, self.width), dev(ky, self.height));
                a + b + a * b
            }
        }
    }

    fn payload(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Periodic { probs, .. } => probs.clone(),
            Repr::NoFlux { kx, ky, .. } => kx.iter().chain(ky).copied().collect(),
        }
    }

    fn from_payload(
        boundary: BoundaryCondition,
        width: usize,
        height: usize,
        rate: f64,
        time: f64,
        payload: Vec<f64>,
    ) -> Result<Self> {
        let repr = match boundary {
            BoundaryCondition::Periodic => {
                if payload.len() != width * height {
                    return Err(Error::Corrupt {
                        what: "kernel dump",
                        reason: format!("periodic payload holds {} values, expected {}", payload.len(), width * height),
                    });
                }
                let cdf = cumulative(&payload, payload.len());
                Repr::Periodic { probs: payload, cdf }
            }
            BoundaryCondition::NoFlux => {
                if payload.len() != width * width + height * height {
                    return Err(Error::Corrupt {
                        what: "kernel dump",
                        reason: format!(
                            "no-flux payload holds {} values, expected {}",
                            payload.len(),
                            width * width + height * height
                        ),
                    });
                }
                let ky = payload[width * width..].to_vec();
                let mut kx = payload;
                kx.truncate(width * width);
                Repr::NoFlux {
                    kx_cdf: cumulative(&kx, width),
                    ky_cdf: cumulative(&ky, height),
                    kx,
                    ky,
                }
            }
        };
        Ok(TransitionKernel {
            boundary,
            rate,
            time,
            width,
            height,
            repr,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() * 8 + 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.boundary.code());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&self.rate.to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        let start = out.len();
        for p in &payload {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |reason: String| Error::Corrupt {
            what: "kernel dump",
            reason,
        };
        if bytes.len() < HEADER_LEN + 4 {
            return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic {
                what: "kernel dump",
                expected: MAGIC,
                found: magic,
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let boundary = BoundaryCondition::from_code(bytes[8])
            .ok_or_else(|| corrupt(format!("unknown boundary code {}", bytes[8])))?;
        let width = u32_at(9) as usize;
        let height = u32_at(13) as usize;
        let rate = f64_at(17);
        let time = f64_at(25);
        check_params(width, height, rate, time)?;
        let body = &bytes[HEADER_LEN..bytes.len() - 4];
        if body.len() % 8 != 0 {
            return Err(corrupt(format!("payload length {} is not a multiple of 8", body.len())));
        }
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let payload = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_payload(boundary, width, height, rate, time, payload)
    }

    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

thread_local! {
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
}

/// Periodic-lattice kernel from one inverse 2D FFT of the spectral decay
/// factors.
pub fn periodic_kernel(width: usize, height: usize, rate: f64, time: f64) -> Result<TransitionKernel> {
    check_params(width, height, rate, time)?;
    let rt = rate * time;
    let (w, h) = (width, height);
    let sx: Vec<f64> = (0..w).map(|m| (PI * m as f64 / w as f64).sin().powi(2)).collect();
    let sy: Vec<f64> = (0..h).map(|n| (PI * n as f64 / h as f64).sin().powi(2)).collect();
    let mut buf: Vec<Complex64> = (0..h)
        .flat_map(|n| {
            let sx = &sx;
            let syn = sy[n];
            (0..w).map(move |m| Complex64::new((-4.0 * rt * (sx[m] + syn)).exp(), 0.0))
        })
        .collect();

    let (row_fft, col_fft) = PLANNER.with(|pl| {
        let mut pl = pl.borrow_mut();
        (pl.plan_fft_inverse(w), pl.plan_fft_inverse(h))
    });
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    let scale = 1.0 / (w * h) as f64;
    let mut probs: Vec<f64> = buf.iter().map(|z| z.re * scale).collect();
    clamp_and_normalize(&mut probs);
    let cdf = cumulative(&probs, probs.len());
    Ok(TransitionKernel {
        boundary: BoundaryCondition::Periodic,
        rate,
        time,
        width,
        height,
        repr: Repr::Periodic { probs, cdf },
    })
}

/// No-flux kernel as the tensor product of two 1D reflecting-walk
/// exponentials.
pub fn noflux_kernel(width: usize, height: usize, rate: f64, time: f64) -> Result<TransitionKernel> {
    check_params(width, height, rate, time)?;
    let rt = rate * time;
    let kx = reflecting_exponential(width, rt);
    let ky = if height == width { kx.clone() } else { reflecting_exponential(height, rt) };
    Ok(TransitionKernel {
        boundary: BoundaryCondition::NoFlux,
        rate,
        time,
        width,
        height,
        repr: Repr::NoFlux {
            kx_cdf: cumulative(&kx, width),
            ky_cdf: cumulative(&ky, height),
            kx,
            ky,
        },
    })
}
