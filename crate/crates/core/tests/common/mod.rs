//! Independent oracles shared by the integration tests. Nothing here calls
//! into the kernel code it is used to check.

#![allow(dead_code)]

use dsd::{rng, BoundaryCondition, IntensityGrid};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub type Matrix = Vec<Vec<f64>>;

/// Dense single-particle generator on a `w`×`h` lattice, pixel index
/// `y * w + x`. Periodic moves that wrap onto the source pixel cancel;
/// no-flux moves that leave the domain are dropped.
pub fn generator(boundary: BoundaryCondition, w: usize, h: usize, rate: f64) -> Matrix {
    let n = w * h;
    let mut q = vec![vec![0.0; n]; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                let j = match boundary {
                    BoundaryCondition::Periodic => {
                        let nx = nx.rem_euclid(w as i64) as usize;
                        let ny = ny.rem_euclid(h as i64) as usize;
                        ny * w + nx
                    }
                    BoundaryCondition::NoFlux => {
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        ny as usize * w + nx as usize
                    }
                };
                q[i][j] += rate;
                q[i][i] -= rate;
            }
        }
    }
    q
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// `exp(t Q)` by scaling and squaring around a Taylor series summed until
/// the terms stop contributing.
pub fn expm(q: &Matrix, t: f64) -> Matrix {
    let n = q.len();
    let norm = q
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * t;
    let mut s = 0;
    while norm / (1u64 << s) as f64 > 0.25 {
        s += 1;
    }
    let scale = t / (1u64 << s) as f64;
    let a: Matrix = q.iter().map(|row| row.iter().map(|v| v * scale).collect()).collect();
    let mut sum: Matrix = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = sum.clone();
    for k in 1..=40 {
        term = matmul(&term, &a);
        let inv = 1.0 / k as f64;
        let mut biggest: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                term[i][j] *= inv;
                sum[i][j] += term[i][j];
                biggest = biggest.max(term[i][j].abs());
            }
        }
        if biggest < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = matmul(&sum, &sum);
    }
    sum
}

/// Kernel entry `p(to | from)` from the dense oracle.
pub fn oracle_prob(m: &Matrix, w: usize, from: (usize, usize), to: (usize, usize)) -> f64 {
    m[from.1 * w + from.0][to.1 * w + to.0]
}

/// Upper-tail p-value of Pearson's statistic for `counts` against
/// `probs`. Cells with negligible expectation are pooled.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * total as f64;
        if e < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += e;
            continue;
        }
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp.max(1e-12);
        cells += 1;
    }
    assert!(cells >= 2, "chi-square needs at least two cells");
    ChiSquared::new((cells - 1) as f64).unwrap().sf(stat)
}

/// Single-channel grid with between 1 and `max_particles` units at random
/// positions.
pub fn random_sparse_grid(size: usize, max_particles: usize, seed: u64) -> IntensityGrid {
    let mut r = rng::stream(seed, &[0]);
    let mut g = IntensityGrid::zeros(size, size, 1);
    for _ in 0..r.random_range(1..=max_particles) {
        let (x, y) = (r.random_range(0..size), r.random_range(0..size));
        g.set(x, y, 0, g.get(x, y, 0) + 1);
    }
    g
}

/// Mean per-pixel absolute difference.
pub fn mean_l1(a: &IntensityGrid, b: &IntensityGrid) -> f64 {
    let s: u64 = a.values().iter().zip(b.values()).map(|(x, y)| x.abs_diff(*y)).sum();
    s as f64 / a.values().len() as f64
}

/// Largest relative disagreement between `backward_pass` and central
/// finite differences over every parameter of a 6×6 single-channel model.
///
/// The difference quotient carries round-off of about `ε·|L|/h`. A relative
/// error of `1e-4` can only be resolved for gradients at least `1e4` times
/// that, so smaller gradients are compared against this floor instead.
pub fn finite_difference_error(kind: dsd::LossKind, seed: u64) -> f64 {
    use dsd::rate_model::DEFAULT_HIDDEN;
    use dsd::reverse::oracle_rates;
    use dsd::{corrupt, BoundaryCondition, ToyConvModel, TransitionKernel};

    let boundary = BoundaryCondition::Periodic;
    let (rate, t, dt) = (8.0, 0.3, 0.02);
    let mut clean = IntensityGrid::zeros(6, 6, 1);
    let mut r = rng::stream(seed, &[7]);
    for _ in 0..10 {
        let (x, y) = (r.random_range(0..6), r.random_range(0..6));
        clean.set(x, y, 0, 1);
    }
    let kernel = TransitionKernel::new(boundary, 6, 6, rate, t).unwrap();
    let (grid, ledger) = corrupt(&clean, &kernel, &mut r).unwrap();
    let truth = oracle_rates(&ledger, &grid, &kernel, rate).unwrap();
    let mut model = ToyConvModel::new(1, DEFAULT_HIDDEN, boundary, 1.0, rate, seed).unwrap();
    let (loss, grad) = model.backward_pass(&grid, t, kind, &truth, dt).unwrap();
    let h = 1e-5;
    let floor = 1e4 * f64::EPSILON * loss.abs() / h;
    let mut worst: f64 = 0.0;
    for i in 0..model.num_params() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = model.loss(&grid, t, kind, &truth, dt).unwrap();
        model.params_mut()[i] = orig - h;
        let down = model.loss(&grid, t, kind, &truth, dt).unwrap();
        model.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// Every entry of an engine kernel as a dense matrix.
pub fn dense(k: &dsd::TransitionKernel) -> Matrix {
    use dsd::Pixel;
    let (w, h) = (k.width(), k.height());
    (0..w * h)
        .map(|i| {
            (0..w * h)
                .map(|j| k.prob_unchecked(Pixel::new(i % w, i / w), Pixel::new(j % w, j / w)))
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
