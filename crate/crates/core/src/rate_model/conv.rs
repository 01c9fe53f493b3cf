//! A three-layer convolutional rate model with hand-written backprop.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lattice::{BoundaryCondition, Direction, IntensityGrid};
use crate::loss::{loss_and_grad, LossKind};
use crate::reverse::RateField;
use crate::rng;

pub const DEFAULT_HIDDEN: usize = 32;

/// Constant input maps carrying the time.
const TIME_CHANNELS: usize = 2;

/// Times below this are fed to the network as this. Keeps predicted rates
/// bounded as the sampler approaches `t = 0`, so `t · max_rate` eventually
/// drops under the CFL tolerance and the final step lands exactly on zero.
pub const MIN_TIME: f64 = 1e-12;

const MAGIC: &[u8; 4] = b"DSDM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 1 + 8 + 8 + 8;

/// 3×3 conv → SiLU → 3×3 conv → SiLU → 3×3 conv → softplus.
///
/// Input maps are the `C` intensity channels divided by `norm_scale` plus two
/// constant maps holding `t` and `ln(t) / 10`. Output map `d * C + c`, after
/// the softplus, is the rate of channel `c` in direction `Direction::ALL[d]`
/// in units of [`output_scale`](Self::output_scale)`(t) = rate_scale + 1/t`
/// (with `t` floored at [`MIN_TIME`]).
/// True reverse rates are of order `r` when the lattice is mixed and grow
/// like `1/t` for displaced units as `t → 0`; the scale covers both ends so
/// the network only has to resolve ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConvModel {
    channels: usize,
    hidden: usize,
    boundary: BoundaryCondition,
    norm_scale: f64,
    rate_scale: f64,
    params: Vec<f64>,
}

struct Trace {
    x0: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    z3: Vec<f64>,
}

impl ToyConvModel {
    /// Randomly initialized model (He-scaled hidden layers, small output
    /// layer).
    pub fn new(
        channels: usize,
        hidden: usize,
        boundary: BoundaryCondition,
        norm_scale: f64,
        rate_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if channels == 0 || hidden == 0 {
            return Err(Error::InvalidParameter("model needs at least one channel and one hidden map".into()));
        }
        for (name, v) in [("norm_scale", norm_scale), ("rate_scale", rate_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let mut m = ToyConvModel {
            channels,
            hidden,
            boundary,
            norm_scale,
            rate_scale,
            params: Vec::new(),
        };
        m.params = vec![0.0; m.num_params()];
        let mut r = rng::stream(seed, &[]);
        for (l, &(cin, cout)) in m.layer_dims().iter().enumerate() {
            let (wo, _) = m.offsets()[l];
            let gain = if l == 2 { 0.1 } else { 2.0 };
            let std = (gain / (cin * 9) as f64).sqrt();
            for v in &mut m.params[wo..wo + cin * cout * 9] {
                let z: f64 = StandardNormal.sample(&mut r);
                *v = std * z;
            }
        }
        Ok(m)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.boundary
    }

    pub fn norm_scale(&self) -> f64 {
        self.norm_scale
    }

    pub fn rate_scale(&self) -> f64 {
        self.rate_scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| o * i * 9 + o).sum()
    }

    /// Zero the output layer so every prediction is `output_scale(t) · ln 2`.
    pub fn zero_output_layer(&mut self) {
        let (wo, _) = self.offsets()[2];
        for v in &mut self.params[wo..] {
            *v = 0.0;
        }
    }

    fn layer_dims(&self) -> [(usize, usize); 3] {
        [
            (self.channels + TIME_CHANNELS, self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, 4 * self.channels),
        ]
    }

    fn offsets(&self) -> [(usize, usize); 3] {
        let mut out = [(0, 0); 3];
        let mut at = 0;
        for (l, &(i, o)) in self.layer_dims().iter().enumerate() {
            out[l] = (at, at + o * i * 9);
            at += o * i * 9 + o;
        }
        out
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (cin, cout) = self.layer_dims()[l];
        let (wo, bo) = self.offsets()[l];
        (&self.params[wo..wo + cin * cout * 9], &self.params[bo..bo + cout])
    }

    fn circular(&self) -> bool {
        self.boundary == BoundaryCondition::Periodic
    }

    fn check(&self, grid: &IntensityGrid, t: f64) -> Result<()> {
        if grid.channels() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} channels, grid has {}",
                self.channels,
                grid.channels()
            )));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("time must be positive and finite, got {t}")));
        }
        Ok(())
    }

    fn run(&self, grid: &IntensityGrid, t: f64) -> Trace {
        let (w, h, c) = (grid.width(), grid.height(), self.channels);
        let n = w * h;
        let mut input = vec![0.0; (c + TIME_CHANNELS) * n];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    input[ch * n + y * w + x] = grid.get(x, y, ch) as f64 / self.norm_scale;
                }
            }
        }
        input[c * n..(c + 1) * n].fill(t);
        input[(c + 1) * n..].fill(t.max(MIN_TIME).ln() / 10.0);
        let circ = self.circular();
        let x0 = pad(&input, c + TIME_CHANNELS, w, h, circ);
        let (w1, b1) = self.layer(0);
        let z1 = conv_forward(&x0, c + TIME_CHANNELS, w, h, w1, b1);
        let a1 = pad(&z1.iter().map(|&z| silu(z)).collect::<Vec<_>>(), self.hidden, w, h, circ);
        let (w2, b2) = self.layer(1);
        let z2 = conv_forward(&a1, self.hidden, w, h, w2, b2);
        let a2 = pad(&z2.iter().map(|&z| silu(z)).collect::<Vec<_>>(), self.hidden, w, h, circ);
        let (w3, b3) = self.layer(2);
        let z3 = conv_forward(&a2, self.hidden, w, h, w3, b3);
        Trace { x0, z1, a1, z2, a2, z3 }
    }

    /// Multiplier applied to the softplus outputs at time `t`.
    pub fn output_scale(&self, t: f64) -> f64 {
        self.rate_scale + 1.0 / t.max(MIN_TIME)
    }

    fn rates_from(&self, z3: &[f64], w: usize, h: usize, t: f64) -> RateField {
        let c = self.channels;
        let scale = self.output_scale(t);
        let n = w * h;
        let mut field = RateField::zeros(w, h, c);
        for d in Direction::ALL {
            for ch in 0..c {
                let map = &z3[(d.index() * c + ch) * n..][..n];
                for y in 0..h {
                    for x in 0..w {
                        field.set(d, x, y, ch, scale * softplus(map[y * w + x]));
                    }
                }
            }
        }
        field
    }

    /// Predicted rates for `grid` at time `t`.
    pub fn forward_pass(&self, grid: &IntensityGrid, t: f64) -> Result<RateField> {
        self.check(grid, t)?;
        let tr = self.run(grid, t);
        Ok(self.rates_from(&tr.z3, grid.width(), grid.height(), t))
    }

    /// Loss against `truth` and its gradient with respect to every parameter,
    /// laid out like [`params`](Self::params).
    pub fn backward_pass(
        &self,
        grid: &IntensityGrid,
        t: f64,
        kind: LossKind,
        truth: &RateField,
        dt: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check(grid, t)?;
        let (w, h, c) = (grid.width(), grid.height(), self.channels);
        let n = w * h;
        let tr = self.run(grid, t);
        let pred = self.rates_from(&tr.z3, w, h, t);
        let scale = self.output_scale(t);
        let (loss, g_pred) = loss_and_grad(kind, &pred, truth, dt)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: 0 });
        }
        let mut grad = vec![0.0; self.num_params()];
        let offs = self.offsets();
        let dims = self.layer_dims();
        let circ = self.circular();

        let mut dz3 = vec![0.0; 4 * c * n];
        for d in Direction::ALL {
            for ch in 0..c {
                let o = d.index() * c + ch;
                for y in 0..h {
                    for x in 0..w {
                        let z = tr.z3[o * n + y * w + x];
                        dz3[o * n + y * w + x] = g_pred[pred.index(d, x, y, ch)] * scale * sigmoid(z);
                    }
                }
            }
        }

        let back = |l: usize, input: &[f64], dout: &[f64], grad: &mut [f64], want_input: bool| {
            let (cin, cout) = dims[l];
            let (wo, bo) = offs[l];
            let (weights, _) = self.layer(l);
            let (gw, gb) = grad.split_at_mut(bo);
            conv_backward(
                input,
                cin,
                w,
                h,
                weights,
                dout,
                &mut gw[wo..wo + cin * cout * 9],
                &mut gb[..cout],
                want_input,
            )
        };

        let da2 = unpad(&back(2, &tr.a2, &dz3, &mut grad, true).unwrap(), self.hidden, w, h, circ);
        let dz2: Vec<f64> = da2.iter().zip(&tr.z2).map(|(g, &z)| g * silu_grad(z)).collect();
        let da1 = unpad(&back(1, &tr.a1, &dz2, &mut grad, true).unwrap(), self.hidden, w, h, circ);
        let dz1: Vec<f64> = da1.iter().zip(&tr.z1).map(|(g, &z)| g * silu_grad(z)).collect();
        back(0, &tr.x0, &dz1, &mut grad, false);
        Ok((loss, grad))
    }

    /// Loss only, same value as [`backward_pass`](Self::backward_pass).
    pub fn loss(&self, grid: &IntensityGrid, t: f64, kind: LossKind, truth: &RateField, dt: f64) -> Result<f64> {
        let pred = self.forward_pass(grid, t)?;
        Ok(loss_and_grad(kind, &pred, truth, dt)?.0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN + 8 * self.params.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.channels as u32).to_le_bytes());
        b.extend_from_slice(&(self.hidden as u32).to_le_bytes());
        b.push(self.boundary.code());
        b.extend_from_slice(&self.norm_scale.to_le_bytes());
        b.extend_from_slice(&self.rate_scale.to_le_bytes());
        b.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            b.extend_from_slice(&p.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |reason: String| Error::Corrupt {
            what: "model checkpoint",
            reason,
        };
        if bytes.len() < HEADER_LEN {
            return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                what: "model checkpoint",
                expected: *MAGIC,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let channels = u32_at(8) as usize;
        let hidden = u32_at(12) as usize;
        let boundary =
            BoundaryCondition::from_code(bytes[16]).ok_or_else(|| corrupt(format!("unknown boundary code {}", bytes[16])))?;
        let norm_scale = f64_at(17);
        let rate_scale = f64_at(25);
        let count = u64::from_le_bytes(bytes[33..41].try_into().unwrap()) as usize;
        let mut m = ToyConvModel::new(channels, hidden, boundary, norm_scale, rate_scale, 0)
            .map_err(|e| corrupt(e.to_string()))?;
        if count != m.num_params() {
            return Err(corrupt(format!(
                "header declares {count} parameters, architecture needs {}",
                m.num_params()
            )));
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * count {
            return Err(Error::TruncatedPayload {
                offset: HEADER_LEN,
                expected: 8 * count,
                found: body.len(),
            });
        }
        for (p, chunk) in m.params.iter_mut().zip(body.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(m)
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

/// 99th-percentile pixel value over a dataset (nearest rank), at least 1.
pub fn percentile_scale(data: &[IntensityGrid]) -> f64 {
    let mut vals: Vec<u64> = data.iter().flat_map(|g| g.values().iter().copied()).collect();
    if vals.is_empty() {
        return 1.0;
    }
    vals.sort_unstable();
    let rank = ((0.99 * vals.len() as f64).ceil() as usize).clamp(1, vals.len());
    (vals[rank - 1] as f64).max(1.0)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Pad `[ch][h][w]` maps by one pixel on each side.
fn pad(input: &[f64], ch: usize, w: usize, h: usize, circular: bool) -> Vec<f64> {
    let (pw, ph) = (w + 2, h + 2);
    let mut out = vec![0.0; ch * pw * ph];
    for c in 0..ch {
        let src = &input[c * w * h..][..w * h];
        let dst = &mut out[c * pw * ph..][..pw * ph];
        for py in 0..ph {
            let y = if circular {
                (py + h - 1) % h
            } else if py == 0 || py == h + 1 {
                continue;
            } else {
                py - 1
            };
            for px in 0..pw {
                let x = if circular {
                    (px + w - 1) % w
                } else if px == 0 || px == w + 1 {
                    continue;
                } else {
                    px - 1
                };
                dst[py * pw + px] = src[y * w + x];
            }
        }
    }
    out
}

/// Adjoint of [`pad`].
fn unpad(grad: &[f64], ch: usize, w: usize, h: usize, circular: bool) -> Vec<f64> {
    let (pw, ph) = (w + 2, h + 2);
    let mut out = vec![0.0; ch * w * h];
    for c in 0..ch {
        let src = &grad[c * pw * ph..][..pw * ph];
        let dst = &mut out[c * w * h..][..w * h];
        for py in 0..ph {
            for px in 0..pw {
                let (x, y) = if circular {
                    ((px + w - 1) % w, (py + h - 1) % h)
                } else if px == 0 || px == w + 1 || py == 0 || py == h + 1 {
                    continue;
                } else {
                    (px - 1, py - 1)
                };
                dst[y * w + x] += src[py * pw + px];
            }
        }
    }
    out
}

fn conv_forward(padded: &[f64], cin: usize, w: usize, h: usize, weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let cout = bias.len();
    let (pw, ph) = (w + 2, h + 2);
    let mut out = vec![0.0; cout * w * h];
    for (o, map) in out.chunks_exact_mut(w * h).enumerate() {
        map.fill(bias[o]);
        for i in 0..cin {
            let src = &padded[i * pw * ph..][..pw * ph];
            let k = &weights[(o * cin + i) * 9..][..9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = k[ky * 3 + kx];
                    for y in 0..h {
                        let row = &src[(y + ky) * pw + kx..][..w];
                        for (acc, &v) in map[y * w..][..w].iter_mut().zip(row) {
                            *acc += wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the gradient with respect
/// to the padded input when asked.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    padded: &[f64],
    cin: usize,
    w: usize,
    h: usize,
    weights: &[f64],
    dout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let cout = gb.len();
    let (pw, ph) = (w + 2, h + 2);
    let mut din = want_input.then(|| vec![0.0; cin * pw * ph]);
    for o in 0..cout {
        let g = &dout[o * w * h..][..w * h];
        gb[o] += g.iter().sum::<f64>();
        for i in 0..cin {
            let src = &padded[i * pw * ph..][..pw * ph];
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut acc = 0.0;
                    for y in 0..h {
                        let row = &src[(y + ky) * pw + kx..][..w];
                        acc += row.iter().zip(&g[y * w..][..w]).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gw[(o * cin + i) * 9 + ky * 3 + kx] += acc;
                    if let Some(din) = din.as_mut() {
                        let wv = weights[(o * cin + i) * 9 + ky * 3 + kx];
                        let dst = &mut din[i * pw * ph..][..pw * ph];
                        for y in 0..h {
                            let row = &mut dst[(y + ky) * pw + kx..][..w];
                            for (d, &v) in row.iter_mut().zip(&g[y * w..][..w]) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    din
}
