//! Classical reference regressors: k-nearest neighbours and ridge regression.
//!
//! Both work on raw feature rows by default. An optional per-feature
//! standardization, fitted on the training rows, can be enabled through
//! [`BaselineConfig::standardize`]; the fitted scaler travels with the model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub knn_k: usize,
    pub ridge_alpha: f64,
    pub standardize: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            knn_k: 5,
            ridge_alpha: 0.1,
            standardize: false,
        }
    }
}

/// Per-feature z-scoring. Constant features are centred but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let d = check_matrix(x)?;
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|l| x.iter().map(|r| r[l]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|l| {
                let var = x.iter().map(|r| (r[l] - mean[l]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let d = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InsufficientData("no training rows".into()))?;
    if let Some((i, r)) = x.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::Shape(format!("row {i} has {} features, expected {d}", r.len())));
    }
    Ok(d)
}

fn check_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    let d = check_matrix(x)?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub train_features: Vec<Vec<f64>>,
    pub train_labels: Vec<f64>,
    pub k: usize,
    pub scaler: Option<Standardizer>,
}

impl KnnModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], k: usize, standardize: bool) -> Result<Self> {
        check_xy(x, y)?;
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        let scaler = standardize.then(|| Standardizer::fit(x)).transpose()?;
        let train_features = match &scaler {
            Some(s) => x.iter().map(|r| s.apply(r)).collect(),
            None => x.to_vec(),
        };
        Ok(Self {
            train_features,
            train_labels: y.to_vec(),
            k,
            scaler,
        })
    }

    pub fn dim(&self) -> usize {
        self.train_features.first().map_or(0, Vec::len)
    }
}

/// Mean label of the `k` training rows closest to `x` in Euclidean distance.
/// Equal distances are resolved in favour of the lower training index.
pub fn knn_predict(model: &KnnModel, x: &[f64]) -> Result<f64> {
    let n = model.train_features.len();
    if n < model.k {
        return Err(Error::InsufficientData(format!(
            "k = {} neighbours requested from {n} training rows",
            model.k
        )));
    }
    if x.len() != model.dim() {
        return Err(Error::Shape(format!(
            "query has {} features, model {}",
            x.len(),
            model.dim()
        )));
    }
    let q = match &model.scaler {
        Some(s) => s.apply(x),
        None => x.to_vec(),
    };
    let mut dist: Vec<(f64, usize)> = model
        .train_features
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    dist.select_nth_unstable_by(model.k - 1, cmp);
    let total: f64 = dist[..model.k].iter().map(|&(_, i)| model.train_labels[i]).sum();
    Ok(total / model.k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha_l2: f64,
    pub scaler: Option<Standardizer>,
}

/// Minimizes `|y - X w - b|^2 + alpha |w|^2` with an unpenalized intercept,
/// via the normal equations on mean-centred data. Falls back to the
/// pseudo-inverse when the system is singular.
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], alpha_l2: f64) -> Result<RidgeModel> {
    ridge_fit_with(x, y, alpha_l2, false)
}

pub fn ridge_fit_with(x: &[Vec<f64>], y: &[f64], alpha_l2: f64, standardize: bool) -> Result<RidgeModel> {
    let d = check_xy(x, y)?;
    if !(alpha_l2 >= 0.0 && alpha_l2.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge alpha {alpha_l2} must be >= 0")));
    }
    let scaler = standardize.then(|| Standardizer::fit(x)).transpose()?;
    let rows: Vec<Vec<f64>> = match &scaler {
        Some(s) => x.iter().map(|r| s.apply(r)).collect(),
        None => x.to_vec(),
    };
    let n = rows.len();
    let x_mean: Vec<f64> = (0..d)
        .map(|l| rows.iter().map(|r| r[l]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, l| rows[i][l] - x_mean[l]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = xc.transpose() * &xc;
    for l in 0..d {
        gram[(l, l)] += alpha_l2;
    }
    let rhs = xc.transpose() * yc;
    let chol = gram.clone().cholesky().filter(|ch| {
        let diag = ch.l_dirty().diagonal();
        let max = diag.max();
        diag.min() > 1e-7 * max
    });
    let w = match chol {
        Some(ch) => ch.solve(&rhs),
        None => {
            gram.pseudo_inverse(1e-12)
                .map_err(|e| Error::InvalidArgument(format!("ridge system could not be solved: {e}")))?
                * rhs
        }
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("ridge solution is not finite".into()));
    }
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
    Ok(RidgeModel {
        weights,
        intercept,
        alpha_l2,
        scaler,
    })
}

/// `w . x + b`.
pub fn ridge_predict(model: &RidgeModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        return Err(Error::Shape(format!(
            "query has {} features, model {}",
            x.len(),
            model.weights.len()
        )));
    }
    let q = match &model.scaler {
        Some(s) => s.apply(x),
        None => x.to_vec(),
    };
    Ok(model.weights.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() + model.intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_xy(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let y = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn five_points_average_all_labels() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, -(i as f64)]).collect();
        let m = KnnModel::fit(&x, &[1.0, 2.0, 3.0, 4.0, 5.0], 5, false).unwrap();
        assert_eq!(knn_predict(&m, &[100.0, 3.0]).unwrap(), 3.0);
    }

    #[test]
    fn duplicated_query_point() {
        let mut x = vec![vec![1.0, 1.0]; 5];
        x.extend((0..10).map(|i| vec![10.0 + i as f64, 0.0]));
        let mut y = vec![0.7; 5];
        y.extend(vec![0.1; 10]);
        let m = KnnModel::fit(&x, &y, 5, false).unwrap();
        assert!((knn_predict(&m, &[1.0, 1.0]).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn knn_matches_sort_oracle() {
        for seed in 0..200 {
            let (x, y) = random_xy(30, 4, seed);
            let m = KnnModel::fit(&x, &y, 5, false).unwrap();
            let q: Vec<f64> = x[(seed as usize) % 30].iter().map(|v| v + 0.1).collect();
            let mut order: Vec<(f64, usize)> = x
                .iter()
                .enumerate()
                .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
                .collect();
            order.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect: f64 = order[..5].iter().map(|&(_, i)| y[i]).sum::<f64>() / 5.0;
            assert!((knn_predict(&m, &q).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = vec![vec![1.0], vec![-1.0], vec![1.0]];
        let m = KnnModel::fit(&x, &[0.2, 0.4, 0.9], 2, false).unwrap();
        assert!((knn_predict(&m, &[0.0]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn knn_needs_k_rows() {
        let m = KnnModel::fit(&vec![vec![0.0]; 3], &[0.0; 3], 5, false).unwrap();
        assert!(matches!(knn_predict(&m, &[0.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn exact_line_without_penalty() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = ridge_fit(&x, &y, 0.0).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-12);
        assert!((m.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_one_feature() {
        let m = ridge_fit(&[vec![1.0], vec![-1.0]], &[1.0, -1.0], 0.1).unwrap();
        assert!((m.weights[0] - 2.0 / 2.1).abs() < 1e-14);
        assert!(m.intercept.abs() < 1e-15);
    }

    #[test]
    fn huge_penalty_gives_mean() {
        let (x, y) = random_xy(40, 3, 5);
        let m = ridge_fit(&x, &y, 1e12).unwrap();
        let mean = y.iter().sum::<f64>() / 40.0;
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.intercept - mean).abs() < 1e-9);
    }

    #[test]
    fn singular_system_uses_pseudo_inverse() {
        let x = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let m = ridge_fit(&x, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-9 && (m.weights[1] - 0.5).abs() < 1e-9);
        assert!((ridge_predict(&m, &[4.0, 4.0]).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn ridge_linearity_and_residuals() {
        let (x, y) = random_xy(50, 4, 9);
        let m = ridge_fit(&x, &y, 0.1).unwrap();
        let a = [0.3, -1.0, 2.0, 0.5];
        let b = [1.0, 0.2, -0.4, 0.0];
        let sum: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + v).collect();
        let lhs = ridge_predict(&m, &sum).unwrap();
        let rhs = ridge_predict(&m, &a).unwrap() + ridge_predict(&m, &b).unwrap() - m.intercept;
        assert!((lhs - rhs).abs() < 1e-12);
        let zero = RidgeModel {
            weights: vec![0.0; 4],
            ..m.clone()
        };
        assert_eq!(ridge_predict(&zero, &a).unwrap(), m.intercept);
    }

    #[test]
    fn standardized_ridge_is_scale_free() {
        let (x, y) = random_xy(50, 3, 11);
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * 1000.0, r[1], r[2] - 50.0]).collect();
        let a = ridge_fit_with(&x, &y, 0.1, true).unwrap();
        let b = ridge_fit_with(&scaled, &y, 0.1, true).unwrap();
        for (ra, rb) in x.iter().zip(&scaled) {
            let pa = ridge_predict(&a, ra).unwrap();
            let pb = ridge_predict(&b, rb).unwrap();
            assert!((pa - pb).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn knn_ignores_training_order(seed in 0u64..1000, rot in 0usize..20) {
            let (x, y) = random_xy(20, 3, seed);
            let mut xr = x.clone();
            let mut yr = y.clone();
            xr.rotate_left(rot);
            yr.rotate_left(rot);
            let q = [0.1, -0.2, 0.3];
            let a = knn_predict(&KnnModel::fit(&x, &y, 5, false).unwrap(), &q).unwrap();
            let b = knn_predict(&KnnModel::fit(&xr, &yr, 5, false).unwrap(), &q).unwrap();
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn ridge_loss_grows_with_alpha(seed in 0u64..1000, a in 0.0f64..10.0, extra in 0.0f64..10.0) {
            let (x, y) = random_xy(15, 3, seed);
            let loss = |alpha: f64| {
                let m = ridge_fit(&x, &y, alpha).unwrap();
                x.iter().zip(&y).map(|(r, t)| (ridge_predict(&m, r).unwrap() - t).powi(2)).sum::<f64>()
            };
            proptest::prop_assert!(loss(a + extra) >= loss(a) - 1e-10);
        }
    }
}
