//! Adds Gaussian noise to trained parameters and tracks how test
//! performance degrades: flat curves indicate wide minima.

use fwet::dg::{fit, TrainConfig, Variant};
use fwet::eval::perturb_analysis;
use fwet::synth::{gen_feature_benchmark, SynthSpec};
use fwet::SeedTree;

fn main() -> fwet::Result<()> {
    let bench = gen_feature_benchmark(&SynthSpec::default())?;
    let (test, train) = bench.tables.split_at(1);
    let sigmas = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2];
    for v in [Variant::Agg, Variant::Fwet] {
        let out = fit(v, train, &TrainConfig::default())?;
        let curve = perturb_analysis(&out.model, test, &sigmas, 20, &SeedTree::new(0).child(v.name()))?;
        let line: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{}:{:.4}", p.sigma, p.rmse))
            .collect();
        println!("{:>5} rmse by sigma  {}", v.name(), line.join("  "));
    }
    Ok(())
}
