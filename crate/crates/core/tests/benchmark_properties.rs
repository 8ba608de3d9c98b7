//! Measured properties of the trainers on the synthetic benchmark.

use fwet::dg::{fit, softmax, TrainConfig, Variant};
use fwet::eval::{cross_apply, loso, perturb_analysis, train_domain_regressors, Algorithm, LosoConfig};
use fwet::synth::{gen_feature_benchmark, SynthSpec};
use fwet::SeedTree;

fn bench(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        ..SynthSpec::default()
    }
}

#[test]
fn single_informative_feature_gets_the_largest_weight_share() {
    let mut hits = 0;
    for seed in 0..10u64 {
        let i = (7 * seed as usize + 3) % 60;
        let spec = SynthSpec {
            informative: vec![i],
            ..bench(seed)
        };
        let b = gen_feature_benchmark(&spec).unwrap();
        let out = fit(
            Variant::FwAgg,
            &b.tables,
            &TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let w = softmax(out.model.w.as_ref().unwrap());
        let others = (w.iter().sum::<f64>() - w[i]) / (w.len() - 1) as f64;
        if w[i] > others {
            hits += 1;
        }
    }
    assert!(hits >= 9, "informative weight above the rest in {hits}/10 seeds");
}

#[test]
fn larger_shift_does_not_make_the_benchmark_easier() {
    let cfg = LosoConfig {
        repeats: 1,
        ..LosoConfig::default()
    };
    let agg = [Algorithm::Neural(Variant::Agg)];
    let mut diffs = Vec::new();
    for seed in 0..10u64 {
        let mut rmse = [0.0; 2];
        for (k, shift) in [0.0, 1.0].into_iter().enumerate() {
            let b = gen_feature_benchmark(&SynthSpec { shift, ..bench(seed) }).unwrap();
            let r = loso(&agg, &b.tables, &LosoConfig { seed, ..cfg.clone() }).unwrap();
            rmse[k] = r.mean_rmse(agg[0]).unwrap();
        }
        diffs.push(rmse[1] - rmse[0]);
    }
    let noise = 0.03;
    assert!(
        diffs.iter().all(|&d| d > -noise),
        "shifted minus unshifted AGG RMSE: {diffs:?}"
    );
}

#[test]
fn episodic_transform_transfers_better_across_subjects() {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..10u64 {
        let b = gen_feature_benchmark(&bench(seed)).unwrap();
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let mut cross = [0.0; 2];
        for (k, v) in [Variant::Agg, Variant::Et].into_iter().enumerate() {
            let out = fit(v, &b.tables, &cfg).unwrap();
            let regs = train_domain_regressors(
                &out.model,
                &b.tables,
                &cfg,
                50,
                &SeedTree::new(seed).child("regressors"),
            )
            .unwrap();
            let rows = cross_apply(&out.model, &regs, &b.tables).unwrap();
            cross[k] = rows.iter().map(|r| r.rmse).sum::<f64>() / rows.len() as f64;
        }
        if cross[1] < cross[0] {
            wins += 1;
        }
        pairs.push(cross);
    }
    assert!(wins >= 7, "ET cross RMSE below AGG in {wins}/10 seeds: {pairs:?}");
}

#[test]
fn parameter_noise_degrades_a_trained_model() {
    let b = gen_feature_benchmark(&bench(1)).unwrap();
    let out = fit(Variant::Fwet, &b.tables[1..], &TrainConfig::default()).unwrap();
    let curve = perturb_analysis(&out.model, &b.tables[..1], &[0.0, 0.05, 0.2], 10, &SeedTree::new(1)).unwrap();
    let p = &curve.points;
    assert_eq!(p[0].draws, 1);
    assert!(p[0].rmse <= p[2].rmse, "{p:?}");
}
