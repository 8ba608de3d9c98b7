//! kNN and ridge regression on pooled source subjects.

use fwet::baselines::{knn_predict, ridge_fit, ridge_predict, KnnModel};
use fwet::eval::rmse;
use fwet::synth::{gen_feature_benchmark, SynthSpec};

fn main() -> fwet::Result<()> {
    let bench = gen_feature_benchmark(&SynthSpec::default())?;
    let (test, train) = bench.tables.split_first().expect("six subjects");
    let x: Vec<Vec<f64>> = train.iter().flat_map(|t| t.features.iter().cloned()).collect();
    let y: Vec<f64> = train.iter().flat_map(|t| t.labels.iter().copied()).collect();

    let knn = KnnModel::fit(&x, &y, 5, true)?;
    let pred: Vec<f64> = test
        .features
        .iter()
        .map(|r| knn_predict(&knn, r))
        .collect::<fwet::Result<_>>()?;
    println!("kNN (k = 5):   rmse {:.4}", rmse(&pred, &test.labels)?);

    let ridge = ridge_fit(&x, &y, 1.0)?;
    let pred: Vec<f64> = test
        .features
        .iter()
        .map(|r| ridge_predict(&ridge, r))
        .collect::<fwet::Result<_>>()?;
    println!("ridge (a = 1): rmse {:.4}", rmse(&pred, &test.labels)?);
    Ok(())
}
