//! Learned feature weights of an FW-AGG model, regrouped per channel and
//! compared with the planted informative features.

use fwet::dg::{export_channel_weights, fit, TrainConfig, Variant};
use fwet::synth::{gen_feature_benchmark, SynthSpec};

fn main() -> fwet::Result<()> {
    let spec = SynthSpec::default();
    let bench = gen_feature_benchmark(&spec)?;
    let out = fit(Variant::FwAgg, &bench.tables, &TrainConfig::default())?;
    let channels = export_channel_weights(&out.model)?;
    let n = channels.len();
    let uniform = 1.0 / (2 * n) as f64;
    println!("uniform weight {uniform:.5}");
    for (c, [theta, alpha]) in channels.iter().enumerate() {
        let mark = |band: usize| {
            if spec.informative.contains(&(band * n + c)) {
                "*"
            } else {
                " "
            }
        };
        println!(
            "ch{:02}  theta {theta:.5}{}  alpha {alpha:.5}{}",
            c + 1,
            mark(0),
            mark(1)
        );
    }
    println!("* planted informative feature");
    Ok(())
}
