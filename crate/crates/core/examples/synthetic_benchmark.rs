//! Generates the default synthetic multi-subject benchmark and prints how
//! the subjects differ.

use fwet::synth::{gen_feature_benchmark, SynthSpec};

fn main() -> fwet::Result<()> {
    let bench = gen_feature_benchmark(&SynthSpec::default())?;
    println!("informative features: {:?}", bench.descriptor.spec.informative);
    for (t, shift) in bench.tables.iter().zip(&bench.descriptor.subjects) {
        let mean_y = t.labels.iter().sum::<f64>() / t.len() as f64;
        let zeros = t.labels.iter().filter(|&&y| y == 0.0).count();
        println!(
            "{}: {} trials, mean label {mean_y:.3} ({zeros} at 0), label scale {:.3}, offset {:+.3}",
            t.subject_id,
            t.len(),
            shift.label_scale,
            shift.label_offset
        );
    }
    Ok(())
}
