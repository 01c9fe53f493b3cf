use dsd::dataset::synth_blobs;
use dsd::schedule::{calibrate, ssim};
use dsd::{
    cosine_schedule, likelihood_loss, logit_schedule, polynomial_schedule, rate_matching_l1, BoundaryCondition,
    IntensityGrid, RateField,
};
use proptest::prelude::*;

#[test]
fn logit_first_time_solves_the_defining_relation() {
    let s = logit_schedule(2000, 7.5, 2.5).unwrap();
    let t1 = s.time(1).unwrap();
    assert!((t1 - 2.213e-4).abs() < 5e-8, "t1 = {t1}");
    // At k = 1 the defining relation reduces to e^{-τ₂ t₁} = 1 - e^{-τ₁}.
    let residual = (-2.5 * t1).exp() - (1.0 - (-7.5f64).exp());
    assert!(residual.abs() <= 1e-12, "residual {residual:e}");
    assert_eq!(s.time(2000).unwrap(), 1.0);
}

#[test]
fn cosine_midpoint_matches_half_angle_form() {
    let steps = 100;
    let s = cosine_schedule(steps).unwrap();
    let off = 0.008;
    // cos²θ = (1 + cos 2θ)/2
    let abar = |k: f64| {
        let theta = (k / steps as f64 + off) / (1.0 + off) * std::f64::consts::PI / 2.0;
        let theta0 = off / (1.0 + off) * std::f64::consts::PI / 2.0;
        (1.0 + (2.0 * theta).cos()) / (1.0 + (2.0 * theta0).cos())
    };
    let expected = (1.0 - abar(50.0)) / (1.0 - abar(100.0));
    assert!((s.time(50).unwrap() - expected).abs() < 1e-12);
    assert!(s.times().windows(2).all(|w| w[0] < w[1]));
    assert_eq!(s.time(steps).unwrap(), 1.0);
}

#[test]
fn polynomial_midpoint() {
    let s = polynomial_schedule(2000, 7).unwrap();
    assert!((s.time(1000).unwrap() - 0.0078125).abs() < 1e-15);
}

#[test]
fn inverted_checkerboard_has_negative_ssim() {
    let vals: Vec<u64> = (0..256).map(|i| ((i % 16 + i / 16) % 2) as u64).collect();
    let inv: Vec<u64> = vals.iter().map(|v| 1 - v).collect();
    let a = IntensityGrid::from_values(16, 16, 1, vals).unwrap();
    let b = IntensityGrid::from_values(16, 16, 1, inv).unwrap();
    let s = ssim(&a, &b, 1.0).unwrap();
    assert!(s < 0.0, "ssim {s}");
    assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
}

#[test]
fn calibration_curve_decreases_within_noise() {
    let data = synth_blobs(16, 16, 60, 0.25, 1.5, 3).unwrap();
    let s = logit_schedule(40, 7.5, 2.5).unwrap();
    let curve = calibrate(&data, &s, 120.0, BoundaryCondition::Periodic, 1.0, 9).unwrap();
    assert_eq!(curve.points.len(), 41);
    assert_eq!(curve.points[0].mean_ssim, 1.0);
    for w in curve.points.windows(2) {
        let slack = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        assert!(w[1].mean_ssim <= w[0].mean_ssim + slack, "k={} rises", w[1].k);
    }
    assert!(curve.points.last().unwrap().mean_ssim < 0.1);
}

fn field(vals: &[f64]) -> RateField {
    RateField::from_data(1, 1, 1, vals.to_vec()).unwrap()
}

#[test]
fn likelihood_hand_values() {
    let truth = field(&[1.0, 2.0, 0.0, 4.0]);
    let ones = field(&[1.0; 4]);
    assert!((likelihood_loss(&ones, &truth, 0.5).unwrap() - 2.0).abs() < 1e-15);
    let pred = field(&[2.0, 1.0, 0.5, 3.0]);
    let by_hand = 0.5 * ((2.0 - 2f64.ln()) + 1.0 + 0.5 + (3.0 - 4.0 * 3f64.ln()));
    assert!((likelihood_loss(&pred, &truth, 0.5).unwrap() - by_hand).abs() < 1e-14);
    assert!((rate_matching_l1(&pred, &truth).unwrap() - (1.0 + 1.0 + 0.5 + 1.0) / 4.0).abs() < 1e-15);
}

#[test]
fn l1_on_a_two_by_two_field() {
    let truth = RateField::from_data(2, 2, 1, (0..16).map(|i| (i % 5) as f64).collect()).unwrap();
    let pred = RateField::from_data(2, 2, 1, (0..16).map(|i| (i % 3) as f64 * 1.5).collect()).unwrap();
    let mut s = 0.0;
    for i in 0..16 {
        s += ((i % 3) as f64 * 1.5 - (i % 5) as f64).abs();
    }
    assert!((rate_matching_l1(&pred, &truth).unwrap() - s / 16.0).abs() < 1e-14);
}

proptest! {
    #[test]
    fn likelihood_is_minimal_at_truth(
        truth in proptest::collection::vec(0.0f64..50.0, 8),
        noise in proptest::collection::vec(-0.9f64..3.0, 8),
        dt in 1e-4f64..1.0,
    ) {
        let t: Vec<f64> = truth.iter().map(|v| v + 1e-3).collect();
        let p: Vec<f64> = t.iter().zip(&noise).map(|(a, b)| a * (1.0 + b)).collect();
        let at = likelihood_loss(&field2(&t), &field2(&t), dt).unwrap();
        let off = likelihood_loss(&field2(&p), &field2(&t), dt).unwrap();
        prop_assert!(off >= at - 1e-12 * at.abs().max(1.0));
    }

    #[test]
    fn l1_scales_linearly(
        a in proptest::collection::vec(0.0f64..10.0, 8),
        b in proptest::collection::vec(0.0f64..10.0, 8),
        s in 0.01f64..100.0,
    ) {
        let base = rate_matching_l1(&field2(&a), &field2(&b)).unwrap();
        let sa: Vec<f64> = a.iter().map(|v| v * s).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * s).collect();
        let scaled = rate_matching_l1(&field2(&sa), &field2(&sb)).unwrap();
        prop_assert!((scaled - s * base).abs() <= 1e-9 * scaled.max(1.0));
    }
}

fn field2(vals: &[f64]) -> RateField {
    RateField::from_data(2, 1, 1, vals.to_vec()).unwrap()
}
