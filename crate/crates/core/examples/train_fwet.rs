//! Trains all four neural variants on five synthetic subjects and tests
//! them on the sixth.

use fwet::dg::{fit, TrainConfig, Variant};
use fwet::eval::{pearson_cc, rmse};
use fwet::synth::{gen_feature_benchmark, SynthSpec};

fn main() -> fwet::Result<()> {
    let bench = gen_feature_benchmark(&SynthSpec::default())?;
    let (test, train) = bench.tables.split_first().expect("six subjects");
    let cfg = TrainConfig::default();
    for v in [Variant::Agg, Variant::FwAgg, Variant::Et, Variant::Fwet] {
        let out = fit(v, train, &cfg)?;
        let pred = out.model.predict_rows(&test.features)?;
        println!(
            "{:>7}: rmse {:.4}  cc {:.4}  best epoch {:?} of {}",
            v.name(),
            rmse(&pred, &test.labels)?,
            pearson_cc(&pred, &test.labels).unwrap_or(f64::NAN),
            out.best_epoch,
            out.trace.len()
        );
    }
    Ok(())
}
