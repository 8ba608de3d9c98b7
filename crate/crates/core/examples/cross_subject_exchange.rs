//! Trains a per-subject regressor on top of a frozen feature transform and
//! applies every subject's regressor to every other subject's features.

use fwet::dg::{fit, TrainConfig, Variant};
use fwet::eval::{cross_apply, train_domain_regressors};
use fwet::synth::{gen_feature_benchmark, SynthSpec};
use fwet::SeedTree;

fn main() -> fwet::Result<()> {
    let bench = gen_feature_benchmark(&SynthSpec::default())?;
    let cfg = TrainConfig::default();
    for v in [Variant::Agg, Variant::Et] {
        let out = fit(v, &bench.tables, &cfg)?;
        let regs = train_domain_regressors(&out.model, &bench.tables, &cfg, 50, &SeedTree::new(0).child(v.name()))?;
        let rows = cross_apply(&out.model, &regs, &bench.tables)?;
        let mean = rows.iter().map(|r| r.rmse).sum::<f64>() / rows.len() as f64;
        let per: Vec<String> = rows.iter().map(|r| format!("{} {:.3}", r.subject, r.rmse)).collect();
        println!("{:>3}: mean cross rmse {mean:.4}  [{}]", v.name(), per.join(", "));
    }
    Ok(())
}
