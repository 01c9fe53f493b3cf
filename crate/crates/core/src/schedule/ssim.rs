use crate::error::{Error, Result};
use crate::lattice::IntensityGrid;

/// Side of the square uniform window.
pub const SSIM_WINDOW: usize = 8;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Mean SSIM over every `8×8` window position of one channel (windows shrink
/// to the grid size on grids smaller than 8).
pub fn ssim_channel(a: &IntensityGrid, b: &IntensityGrid, channel: usize, data_range: f64) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "ssim of {}x{}x{} and {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    if channel >= a.channels() {
        return Err(Error::ShapeMismatch(format!("channel {channel} out of range")));
    }
    if !(data_range > 0.0) {
        return Err(Error::InvalidParameter(format!("data range must be positive, got {data_range}")));
    }
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let (w, h) = (a.width(), a.height());
    let (ww, wh) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
    let n = (ww * wh) as f64;

    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - wh) {
        for x0 in 0..=(w - ww) {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + wh {
                for x in x0..x0 + ww {
                    let va = a.get(x, y, channel) as f64;
                    let vb = b.get(x, y, channel) as f64;
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM averaged over channels. `data_range` is the dynamic range of the
/// source data (the file maxval, 1 for binary microstructures).
pub fn ssim(a: &IntensityGrid, b: &IntensityGrid, data_range: f64) -> Result<f64> {
    let mut s = 0.0;
    for c in 0..a.channels() {
        s += ssim_channel(a, b, c, data_range)?;
    }
    Ok(s / a.channels() as f64)
}
