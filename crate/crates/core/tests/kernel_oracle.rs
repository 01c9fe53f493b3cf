mod common;

use common::{chi_square_p, dense, expm, generator, matmul, oracle_prob};
use dsd::{corrupt, rng, BoundaryCondition, IntensityGrid, Pixel, TransitionKernel};

const BOUNDARIES: [BoundaryCondition; 2] = [BoundaryCondition::Periodic, BoundaryCondition::NoFlux];

fn max_entry_error(k: &TransitionKernel, oracle: &common::Matrix) -> f64 {
    let (w, h) = (k.width(), k.height());
    let mut worst: f64 = 0.0;
    for fy in 0..h {
        for fx in 0..w {
            for ty in 0..h {
                for tx in 0..w {
                    let got = k.prob_unchecked(Pixel::new(fx, fy), Pixel::new(tx, ty));
                    worst = worst.max((got - oracle_prob(oracle, w, (fx, fy), (tx, ty))).abs());
                }
            }
        }
    }
    worst
}

#[test]
fn four_by_four_periodic_matches_series() {
    let k = TransitionKernel::new(BoundaryCondition::Periodic, 4, 4, 1.0, 0.3).unwrap();
    let oracle = expm(&generator(BoundaryCondition::Periodic, 4, 4, 1.0), 0.3);
    assert!(max_entry_error(&k, &oracle) <= 1e-10);
}

#[test]
fn three_by_three_noflux_matches_series() {
    let k = TransitionKernel::new(BoundaryCondition::NoFlux, 3, 3, 1.0, 0.5).unwrap();
    let oracle = expm(&generator(BoundaryCondition::NoFlux, 3, 3, 1.0), 0.5);
    assert!(max_entry_error(&k, &oracle) <= 1e-10);
}

#[test]
fn noflux_corner_factorizes_into_line_kernels() {
    let k = TransitionKernel::new(BoundaryCondition::NoFlux, 2, 2, 1.0, 0.1).unwrap();
    let line = expm(&generator(BoundaryCondition::NoFlux, 2, 1, 1.0), 0.1);
    let expected = line[0][1] * line[0][0];
    let got = k.prob_unchecked(Pixel::new(0, 0), Pixel::new(1, 0));
    assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
}

#[test]
fn all_small_lattices_match_series() {
    for boundary in BOUNDARIES {
        for w in 1..=8 {
            for h in 1..=8 {
                let q = generator(boundary, w, h, 1.0);
                for rt in [0.1, 0.5, 2.0, 10.0] {
                    let k = TransitionKernel::new(boundary, w, h, 1.0, rt).unwrap();
                    let err = max_entry_error(&k, &expm(&q, rt));
                    assert!(err <= 1e-10, "{boundary:?} {w}x{h} rt={rt}: error {err:e}");
                }
            }
        }
    }
}

#[test]
fn rate_and_time_enter_only_as_a_product() {
    for boundary in BOUNDARIES {
        let a = TransitionKernel::new(boundary, 5, 3, 4.0, 0.25).unwrap();
        let b = TransitionKernel::new(boundary, 5, 3, 1.0, 1.0).unwrap();
        let oracle = expm(&generator(boundary, 5, 3, 1.0), 1.0);
        assert!(max_entry_error(&a, &oracle) <= 1e-10);
        assert!(max_entry_error(&b, &oracle) <= 1e-10);
    }
}

#[test]
fn chapman_kolmogorov_composition() {
    for boundary in BOUNDARIES {
        for (w, h) in [(1, 1), (2, 3), (4, 4), (5, 7), (8, 8), (8, 3)] {
            for (t1, t2) in [(0.1, 0.4), (0.5, 2.0), (2.0, 10.0), (0.05, 0.05)] {
                let k1 = dense(&TransitionKernel::new(boundary, w, h, 1.0, t1).unwrap());
                let k2 = dense(&TransitionKernel::new(boundary, w, h, 1.0, t2).unwrap());
                let k12 = dense(&TransitionKernel::new(boundary, w, h, 1.0, t1 + t2).unwrap());
                let comp = matmul(&k1, &k2);
                for (row_a, row_b) in comp.iter().zip(&k12) {
                    for (a, b) in row_a.iter().zip(row_b) {
                        assert!((a - b).abs() <= 1e-9, "{boundary:?} {w}x{h} {t1}+{t2}");
                    }
                }
            }
        }
    }
}

#[test]
fn sampled_destinations_follow_the_kernel() {
    let k = TransitionKernel::new(BoundaryCondition::Periodic, 4, 4, 1.0, 0.5).unwrap();
    let from = Pixel::new(1, 2);
    let mut counts = vec![0u64; 16];
    let mut r = rng::stream(11, &[]);
    for _ in 0..1_000_000 {
        let p = k.sample_destination(from, &mut r);
        counts[p.y * 4 + p.x] += 1;
    }
    let probs: Vec<f64> = (0..16).map(|j| k.prob_unchecked(from, Pixel::new(j % 4, j / 4))).collect();
    let p = chi_square_p(&counts, &probs);
    assert!(p > 1e-3, "chi-square p = {p}");
}

#[test]
fn single_particle_corruptions_follow_the_kernel_row() {
    let k = TransitionKernel::new(BoundaryCondition::Periodic, 4, 4, 1.0, 0.5).unwrap();
    let oracle = expm(&generator(BoundaryCondition::Periodic, 4, 4, 1.0), 0.5);
    let mut grid = IntensityGrid::zeros(4, 4, 1);
    grid.set(0, 0, 0, 1);
    let mut counts = vec![0u64; 16];
    let mut r = rng::stream(12, &[]);
    for _ in 0..100_000 {
        let (g, _) = corrupt(&grid, &k, &mut r).unwrap();
        let i = g.values().iter().position(|&v| v == 1).unwrap();
        counts[i] += 1;
    }
    let p = chi_square_p(&counts, &oracle[0]);
    assert!(p > 1e-3, "chi-square p = {p}");
}

#[test]
fn large_dump_reloads_to_identical_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.dsdk");
    let k = TransitionKernel::new(BoundaryCondition::Periodic, 256, 256, 120.0, 0.01).unwrap();
    k.dump(&path).unwrap();
    let back = TransitionKernel::load(&path).unwrap();
    let mut grid = IntensityGrid::zeros(256, 256, 1);
    for i in 0..2000 {
        grid.set((i * 37) % 256, (i * 91) % 256, 0, 1 + (i % 3) as u64);
    }
    let (a, la) = corrupt(&grid, &k, &mut rng::stream(5, &[])).unwrap();
    let (b, lb) = corrupt(&grid, &back, &mut rng::stream(5, &[])).unwrap();
    assert_eq!(a, b);
    assert_eq!(la.to_csv(), lb.to_csv());
}
