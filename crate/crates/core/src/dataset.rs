//! Synthetic binary microstructures and directory loading.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{load_image, save_image, IntensityGrid};
use crate::rng;

/// `count` binary grids, each a thresholded, periodically smoothed Gaussian
/// field with exactly `round(target_porosity · W · H)` ones.
///
/// The threshold is the exact quantile: pixels are ranked by field value and
/// ties broken by pixel index, so the porosity never varies between samples.
/// `correlation_length` is the smoothing standard deviation in pixels; zero
/// leaves the noise white.
pub fn synth_blobs(
    width: usize,
    height: usize,
    count: usize,
    target_porosity: f64,
    correlation_length: f64,
    seed: u64,
) -> Result<Vec<IntensityGrid>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("empty lattice".into()));
    }
    if !(target_porosity > 0.0 && target_porosity < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "porosity must lie in (0,1), got {target_porosity}"
        )));
    }
    if !(correlation_length >= 0.0 && correlation_length.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "correlation length must be >= 0, got {correlation_length}"
        )));
    }
    let n = width * height;
    let ones = (target_porosity * n as f64).round() as usize;
    if ones == 0 || ones == n {
        return Err(Error::InvalidParameter(format!(
            "porosity {target_porosity} rounds to {ones} of {n} pixels"
        )));
    }
    let taps = gaussian_taps(correlation_length);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
            let field = smooth(&noise, width, height, &taps);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
            let mut values = vec![0u64; n];
            for &p in &order[..ones] {
                values[p] = 1;
            }
            IntensityGrid::from_values(width, height, 1, values)
        })
        .collect()
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma < 1e-9 {
        return vec![1.0];
    }
    let half = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-half..=half).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable circular convolution with symmetric `taps`.
fn smooth(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as i64;
    let wrap = |i: i64, n: usize| i.rem_euclid(n as i64) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[y * w + wrap(x as i64 + k as i64 - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[wrap(y as i64 + k as i64 - half, h) * w + x])
                .sum();
        }
    }
    out
}

/// Shell-style match supporting `*` and `?`.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let s: Vec<char> = name.chars().collect();
    let (mut pi, mut si) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while si < s.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == s[si]) {
            pi += 1;
            si += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, si));
            pi += 1;
        } else if let Some((sp, ss)) = star {
            pi = sp + 1;
            si = ss + 1;
            star = Some((sp, ss + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

/// Files in `dir` whose names match `pattern`, in lexicographic order.
pub fn list_dir(dir: impl AsRef<Path>, pattern: &str) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && glob_match(pattern, &entry.file_name().to_string_lossy()) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Load every matching PGM/PPM in `dir`. All images must share dimensions
/// and channel count; the first one that does not is named in the error.
pub fn load_dir(dir: impl AsRef<Path>, pattern: &str) -> Result<Vec<IntensityGrid>> {
    let files = list_dir(dir, pattern)?;
    let grids: Vec<IntensityGrid> = files
        .par_iter()
        .map(|f| {
            load_image(f).map_err(|e| Error::Dataset {
                file: f.clone(),
                reason: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    if let Some(first) = grids.first() {
        for (g, f) in grids.iter().zip(&files) {
            if !g.same_shape(first) {
                return Err(Error::Dataset {
                    file: f.clone(),
                    reason: format!(
                        "{}x{}x{} differs from {}x{}x{} of {}",
                        g.width(),
                        g.height(),
                        g.channels(),
                        first.width(),
                        first.height(),
                        first.channels(),
                        files[0].display()
                    ),
                });
            }
        }
    }
    Ok(grids)
}

/// Write `grids` as `{prefix}{index:05}.pgm` (or `.ppm` for colour).
pub fn save_dir(dir: impl AsRef<Path>, prefix: &str, grids: &[IntensityGrid]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    grids
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let ext = if g.channels() == 3 { "ppm" } else { "pgm" };
            let path = dir.join(format!("{prefix}{i:05}.{ext}"));
            save_image(g, &path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_porosity_and_determinism() {
        let a = synth_blobs(16, 16, 20, 0.25, 2.0, 5).unwrap();
        assert!(a.iter().all(|g| g.total_intensity(0) == 64 && g.max_value() == 1));
        assert_eq!(a, synth_blobs(16, 16, 20, 0.25, 2.0, 5).unwrap());
        assert_ne!(a, synth_blobs(16, 16, 20, 0.25, 2.0, 6).unwrap());
    }

    #[test]
    fn infeasible_porosity() {
        assert!(synth_blobs(4, 4, 1, 0.01, 1.0, 0).is_err());
        assert!(synth_blobs(4, 4, 1, 0.99, 1.0, 0).is_err());
        assert!(synth_blobs(4, 4, 1, 0.0, 1.0, 0).is_err());
        assert!(synth_blobs(4, 4, 1, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn globbing() {
        assert!(glob_match("*.pgm", "a.pgm"));
        assert!(glob_match("img_??.p*m", "img_07.ppm"));
        assert!(!glob_match("*.pgm", "a.ppm"));
        assert!(glob_match("*", ""));
        assert!(!glob_match("a*b", "acbd"));
    }

    #[test]
    fn dir_round_trip_and_mixed_shapes() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dir(dir.path(), "*.pgm").unwrap().is_empty());
        let grids = synth_blobs(8, 8, 3, 0.5, 1.0, 1).unwrap();
        save_dir(dir.path(), "s", &grids).unwrap();
        assert_eq!(load_dir(dir.path(), "*.pgm").unwrap(), grids);
        save_image(&IntensityGrid::zeros(4, 4, 1), dir.path().join("z.pgm")).unwrap();
        match load_dir(dir.path(), "*.pgm") {
            Err(Error::Dataset { file, .. }) => assert!(file.ends_with("z.pgm")),
            other => panic!("expected dataset error, got {other:?}"),
        }
    }
}
