//! Training objectives against ground-truth reverse rates.
//!
//! The likelihood objective is `Δt Σ (p - r ln p)`, minimised exactly at
//! `p = r`. Entries with `r = 0` contribute `p` (`0 · ln p ≡ 0`).

use crate::error::{Error, Result};
use crate::reverse::RateField;

/// Which objective to train with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    RateMatchingL1,
    Likelihood,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "rate-matching" => Ok(LossKind::RateMatchingL1),
            "likelihood" | "nll" => Ok(LossKind::Likelihood),
            other => Err(Error::InvalidParameter(format!(
                "unknown loss {other:?} (expected l1 or likelihood)"
            ))),
        }
    }
}

/// Deterministic pairwise summation.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn check_shapes(pred: &RateField, truth: &RateField) -> Result<()> {
    if !pred.same_shape(truth) {
        return Err(Error::ShapeMismatch(format!(
            "prediction 4x{}x{}x{} vs truth 4x{}x{}x{}",
            pred.width(),
            pred.height(),
            pred.channels(),
            truth.width(),
            truth.height(),
            truth.channels()
        )));
    }
    Ok(())
}

/// `mean |pred - truth|` over every `(direction, x, y, c)`.
pub fn rate_matching_l1(pred: &RateField, truth: &RateField) -> Result<f64> {
    check_shapes(pred, truth)?;
    let diffs: Vec<f64> = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(p, t)| (p - t).abs())
        .collect();
    Ok(pairwise_sum(&diffs) / diffs.len() as f64)
}

fn likelihood_terms(pred: &RateField, truth: &RateField) -> Result<Vec<f64>> {
    check_shapes(pred, truth)?;
    pred.data()
        .iter()
        .zip(truth.data())
        .enumerate()
        .map(|(i, (&p, &t))| {
            if t == 0.0 {
                Ok(p)
            } else if p <= 0.0 {
                Err(Error::ZeroPrediction { index: i, truth: t })
            } else {
                Ok(p - t * p.ln())
            }
        })
        .collect()
}

/// `Δt · Σ (pred - truth · ln pred)`.
pub fn likelihood_loss(pred: &RateField, truth: &RateField, dt: f64) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    Ok(dt * pairwise_sum(&likelihood_terms(pred, truth)?))
}

/// Loss value and its gradient with respect to every predicted entry.
pub fn loss_and_grad(kind: LossKind, pred: &RateField, truth: &RateField, dt: f64) -> Result<(f64, Vec<f64>)> {
    match kind {
        LossKind::RateMatchingL1 => {
            let value = rate_matching_l1(pred, truth)?;
            let n = pred.len() as f64;
            let grad = pred
                .data()
                .iter()
                .zip(truth.data())
                .map(|(p, t)| {
                    if p > t {
                        1.0 / n
                    } else if p < t {
                        -1.0 / n
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok((value, grad))
        }
        LossKind::Likelihood => {
            let value = likelihood_loss(pred, truth, dt)?;
            let grad = pred
                .data()
                .iter()
                .zip(truth.data())
                .map(|(&p, &t)| if t == 0.0 { dt } else { dt * (1.0 - t / p) })
                .collect();
            Ok((value, grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(vals: &[f64]) -> RateField {
        // 4 directions on a 1x1 single-channel lattice per group of four.
        let pixels = vals.len() / 4;
        RateField::from_data(pixels, 1, 1, vals.to_vec()).unwrap()
    }

    #[test]
    fn l1_basic_values() {
        let t = field(&[0.0, 1.0, 2.5, 3.0, 4.0, 0.5, 0.0, 7.0]);
        assert_eq!(rate_matching_l1(&t, &t).unwrap(), 0.0);
        let plus: Vec<f64> = t.data().iter().map(|v| v + 1.0).collect();
        assert!((rate_matching_l1(&field(&plus), &t).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l1_hand_computed_2x2() {
        let p = RateField::from_data(2, 2, 1, (0..16).map(|i| (i as f64 * 0.37).sin().abs()).collect()).unwrap();
        let t = RateField::from_data(2, 2, 1, (0..16).map(|i| (i as f64 * 1.3).cos().abs()).collect()).unwrap();
        let mut expect = 0.0;
        for i in 0..16 {
            expect += ((i as f64 * 0.37).sin().abs() - (i as f64 * 1.3).cos().abs()).abs();
        }
        expect /= 16.0;
        assert!((rate_matching_l1(&p, &t).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn likelihood_hand_computed() {
        let truth = field(&[1.0, 2.0, 0.0, 4.0]);
        let pred = field(&[1.0, 1.0, 1.0, 1.0]);
        // ln 1 = 0, so every term is just pred.
        assert_eq!(likelihood_loss(&pred, &truth, 0.5).unwrap(), 0.5 * 4.0);
        let pred2 = field(&[2.0, 2.0, 2.0, 2.0]);
        let expect = 0.5 * ((2.0 - 2f64.ln()) + (2.0 - 2.0 * 2f64.ln()) + 2.0 + (2.0 - 4.0 * 2f64.ln()));
        assert!((likelihood_loss(&pred2, &truth, 0.5).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn likelihood_degenerate_and_errors() {
        let truth = field(&[0.0; 8]);
        let pred = field(&[1e-3; 8]);
        assert!((likelihood_loss(&pred, &truth, 2.0).unwrap() - 2.0 * 1e-3 * 8.0).abs() < 1e-15);
        let zero = field(&[0.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            likelihood_loss(&zero, &field(&[1.0; 4]), 1.0),
            Err(Error::ZeroPrediction { index: 0, .. })
        ));
        assert!(likelihood_loss(&pred, &truth, 0.0).is_err());
        assert!(rate_matching_l1(&field(&[0.0; 4]), &truth).is_err());
    }

    #[test]
    fn likelihood_gradient_vanishes_at_truth() {
        let truth = field(&[1.0, 2.0, 3.0, 0.5]);
        let (_, g) = loss_and_grad(LossKind::Likelihood, &truth, &truth, 0.3).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn l1_subgradient_flips_sign() {
        let truth = field(&[1.0, 1.0, 1.0, 1.0]);
        let pred = field(&[0.5, 1.5, 0.9, 1.1]);
        let (_, g) = loss_and_grad(LossKind::RateMatchingL1, &pred, &truth, 1.0).unwrap();
        assert_eq!(g, vec![-0.25, 0.25, -0.25, 0.25]);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499500.0);
    }
}
