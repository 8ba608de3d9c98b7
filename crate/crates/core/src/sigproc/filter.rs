use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::RawRecording;
use crate::error::{Error, Result};

/// Hamming window main-lobe constant: transition width ~ 3.3 fs / taps.
const HAMMING_TRANSITION: f64 = 3.3;

fn sinc_lowpass(cutoff_hz: f64, fs: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64 / 2.0;
    let fc = cutoff_hz / fs;
    let window = super::hamming(taps);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - m;
            let ideal = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            ideal * window[n]
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    h
}

/// Linear-phase windowed-sinc band-pass taps (Hamming, odd length).
///
/// Built as the difference of two unit-DC-gain low-passes, so the response
/// at 0 Hz is zero up to rounding. The length is chosen from the narrower of
/// the two transition bands; the Hamming window gives > 50 dB stopband
/// attenuation per pass.
pub fn design_bandpass(low_hz: f64, high_hz: f64, fs: f64) -> Result<Vec<f64>> {
    let nyquist = fs / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::InvalidBand {
            low_hz,
            high_hz,
            reason: format!("need 0 < low < high < Nyquist ({nyquist} Hz)"),
        });
    }
    let transition = low_hz.min(nyquist - high_hz);
    let mut taps = (HAMMING_TRANSITION * fs / transition).ceil() as usize;
    taps = taps.min((8.0 * fs) as usize + 1).max(3);
    if taps.is_multiple_of(2) {
        taps += 1;
    }
    let high = sinc_lowpass(high_hz, fs, taps);
    let low = sinc_lowpass(low_hz, fs, taps);
    Ok(high.iter().zip(&low).map(|(a, b)| a - b).collect())
}

/// Zero-phase band-pass: the FIR from [`design_bandpass`] applied forward
/// and backward over an odd-reflection padded copy of each channel.
pub fn bandpass(recording: &RawRecording, low_hz: f64, high_hz: f64) -> Result<RawRecording> {
    let taps = design_bandpass(low_hz, high_hz, recording.sample_rate_hz)?;
    let mut planner = FftPlanner::new();
    let samples = recording
        .samples
        .iter()
        .map(|ch| filtfilt(&taps, ch, &mut planner))
        .collect();
    Ok(RawRecording {
        samples,
        sample_rate_hz: recording.sample_rate_hz,
        channel_names: recording.channel_names.clone(),
        earlobe_indices: recording.earlobe_indices,
    })
}

fn filtfilt(taps: &[f64], x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = (taps.len() - 1).min(n - 1);
    let mut padded = Vec::with_capacity(n + 2 * pad);
    for k in (1..=pad).rev() {
        padded.push(2.0 * x[0] - x[k]);
    }
    padded.extend_from_slice(x);
    for k in 1..=pad {
        padded.push(2.0 * x[n - 1] - x[n - 1 - k]);
    }
    let mut y = convolve_same(&padded, taps, planner);
    y.reverse();
    let mut y = convolve_same(&y, taps, planner);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Centered linear convolution (output aligned with `x`) for odd-length,
/// symmetric kernels.
fn convolve_same(x: &[f64], h: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let full = x.len() + h.len() - 1;
    let size = full.next_power_of_two();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);

    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(size, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(size, Complex64::new(0.0, 0.0));
    fft.process(&mut a);
    fft.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    ifft.process(&mut a);
    let offset = (h.len() - 1) / 2;
    let scale = 1.0 / size as f64;
    a[offset..offset + x.len()].iter().map(|c| c.re * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: f64, secs: f64) -> Vec<f64> {
        let n = (fs * secs) as usize;
        (0..n).map(|k| (2.0 * PI * freq * k as f64 / fs).sin()).collect()
    }

    fn recording(ch: Vec<f64>, fs: f64) -> RawRecording {
        RawRecording::new(vec![ch], fs, vec!["Cz".into()], None).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// |H(f)| evaluated directly from the taps.
    fn response(h: &[f64], f: f64, fs: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &v) in h.iter().enumerate() {
            let ph = -2.0 * PI * f * n as f64 / fs;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn stopband_tone_is_removed() {
        let x = tone(60.0, 500.0, 60.0);
        let y = bandpass(&recording(x.clone(), 500.0), 1.0, 50.0).unwrap();
        let ratio = rms(&y.samples[0]) / rms(&x);
        assert!(ratio < 0.05, "ratio {ratio}");
        let interior = rms(&y.samples[0][5000..25000]) / rms(&x[5000..25000]);
        assert!(interior < 1e-4, "interior ratio {interior}");
    }

    #[test]
    fn passband_tone_is_kept() {
        let x = tone(10.0, 500.0, 20.0);
        let y = bandpass(&recording(x.clone(), 500.0), 1.0, 50.0).unwrap();
        let ratio = rms(&y.samples[0]) / rms(&x);
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn dc_is_removed() {
        let h = design_bandpass(1.0, 50.0, 500.0).unwrap();
        // the forward-backward gain at DC is |H(0)|^2
        let dc_gain = response(&h, 0.0, 500.0).powi(2);
        assert!(5.0 * dc_gain < 0.1);
        let y = bandpass(&recording(vec![5.0; 5000], 500.0), 1.0, 50.0).unwrap();
        let mean = y.samples[0].iter().sum::<f64>() / 5000.0;
        assert!(mean.abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn stopband_attenuation_at_least_40_db() {
        let fs = 500.0;
        let h = design_bandpass(1.0, 50.0, fs).unwrap();
        for f in [55.0, 60.0, 80.0, 120.0, 200.0] {
            let db = 20.0 * response(&h, f, fs).log10();
            assert!(db < -40.0, "{f} Hz: {db} dB");
        }
    }

    #[test]
    fn invalid_bands() {
        let rec = recording(vec![0.0; 100], 500.0);
        assert!(matches!(bandpass(&rec, 0.0, 50.0), Err(Error::InvalidBand { .. })));
        assert!(matches!(bandpass(&rec, 40.0, 30.0), Err(Error::InvalidBand { .. })));
        assert!(matches!(bandpass(&rec, 1.0, 250.0), Err(Error::InvalidBand { .. })));
    }
}
