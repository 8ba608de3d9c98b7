//! Evaluation: metrics, leave-one-subject-out runs, significance testing
//! and the diagnostic analyses run on trained models.

mod analysis;
mod loso;
pub mod report;
mod stats;

pub use analysis::{
    best_val_from_trace, cross_apply, perturb_analysis, perturb_parameters, train_domain_regressors, val_test_gap,
    val_test_gaps, CrossRow, GapRow, PerturbPoint, PerturbationCurve,
};
pub use loso::{loso, train_algorithm, Algorithm, CellStatus, LosoCell, LosoConfig, LosoReport, TrainedModel};
pub use stats::{bh_adjust, dunn_fdr, midranks, DunnPair, DunnResult};

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("no predictions".into()));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// Pearson correlation. A constant argument has no correlation and is an
/// error rather than zero.
pub fn pearson_cc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least 2 points".into()));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (a, b) = (p - mp, t - mt);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            if sxx == 0.0 {
                "predictions are constant"
            } else {
                "targets are constant"
            }
            .into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((rmse(&[0.0, 1.0], &[1.0, 3.0]).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cc_examples() {
        let t = [0.1, 0.5, 0.2, 0.9];
        let p: Vec<f64> = t.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson_cc(&p, &t).unwrap() - 1.0).abs() < 1e-12);
        let n: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pearson_cc(&n, &t).unwrap() + 1.0).abs() < 1e-12);
        let c = pearson_cc(&[1.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((c - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(matches!(
            pearson_cc(&[1.0, 1.0, 1.0], &t[..3]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn metrics_ignore_pair_order(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
            rot in 0usize..30,
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let mut q = pairs.clone();
            q.rotate_left(rot % pairs.len());
            let (p2, t2): (Vec<f64>, Vec<f64>) = q.into_iter().unzip();
            proptest::prop_assert!((rmse(&p, &t).unwrap() - rmse(&p2, &t2).unwrap()).abs() < 1e-12);
            if let (Ok(a), Ok(b)) = (pearson_cc(&p, &t), pearson_cc(&p2, &t2)) {
                proptest::prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn cc_affine_invariant(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
            a in 0.1f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(c) = pearson_cc(&p, &t) {
                let q: Vec<f64> = p.iter().map(|v| a * v + b).collect();
                proptest::prop_assert!((pearson_cc(&q, &t).unwrap() - c).abs() < 1e-9);
                proptest::prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }
}
