//! Raw multi-channel recording to band-power features and drowsiness labels.
//!
//! A 90 s synthetic recording at 500 Hz carries a 10 Hz tone on the first
//! two channels and a 5 Hz tone on the last two. It goes through the same
//! chain as `fwet extract`.

use fwet::sigproc::{
    bandpass, decimate, di, extract_features, individualized_tau0, reaction_times, rereference, smooth_di, EpochConfig,
    EventLog,
};
use fwet::synth::{gen_raw_fixture, RawFixtureSpec, ToneComponent};

fn main() -> fwet::Result<()> {
    let fixture = gen_raw_fixture(&RawFixtureSpec {
        duration_s: 90.0,
        sample_rate_hz: 500.0,
        channels: 4,
        components: vec![
            ToneComponent {
                freq_hz: 10.0,
                amplitude: 2.0,
                channels: vec![0, 1],
            },
            ToneComponent {
                freq_hz: 5.0,
                amplitude: 2.0,
                channels: vec![2, 3],
            },
        ],
        noise_sd: 0.2,
        earlobes: true,
        seed: 1,
    })?;

    let filtered = bandpass(&fixture.recording, 1.0, 50.0)?;
    let clean = rereference(&decimate(&filtered, 2)?)?;
    let features = extract_features(&clean, &EpochConfig::default())?;
    println!(
        "{} rows x {} features at {} Hz",
        features.rows.len(),
        features.rows[0].len(),
        clean.sample_rate_hz
    );

    let channels = clean.num_channels();
    let first = &features.rows[0];
    for c in 0..channels {
        println!(
            "  {:>3}: theta {:6.2} dB  alpha {:6.2} dB",
            clean.channel_names[c],
            first[c],
            first[channels + c]
        );
    }

    let log = EventLog::new(vec![5.0, 25.0, 45.0, 65.0], vec![5.6, 27.1, 46.0, 68.2])?;
    let taus = reaction_times(&log)?;
    let tau0 = individualized_tau0(&taus)?;
    let per_event: Vec<f64> = taus.iter().map(|&t| di(t, 1.0)).collect();
    println!("reaction times {taus:?}, individualized tau0 {tau0:.3}");
    println!("DI with tau0 = 1: {per_event:.3?}");
    println!("smoothed: {:.3?}", smooth_di(&per_event, 40.0, 20.0));
    Ok(())
}
