use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Band powers below this are clamped before taking the log.
pub const DB_FLOOR_POWER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchConfig {
    pub fft_len: usize,
    pub overlap_frac: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            fft_len: 1024,
            overlap_frac: 0.5,
        }
    }
}

/// Symmetric Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / denom).cos())
        .collect()
}

/// One-sided Welch PSD (power per Hz) over `fft_len / 2 + 1` bins.
///
/// Segments of `fft_len` samples advance by `fft_len * (1 - overlap_frac)`;
/// trailing samples that do not fill a segment are ignored. Each segment is
/// Hamming-windowed without detrending, and the periodograms are scaled by
/// `1 / (fs * sum(w^2))` so that `sum(psd) * fs / fft_len` approximates the
/// signal's mean power.
pub fn welch_psd(samples: &[f64], sample_rate_hz: f64, cfg: &WelchConfig) -> Result<Vec<f64>> {
    let len = cfg.fft_len;
    if len < 2 {
        return Err(Error::InvalidArgument("FFT length must be at least 2".into()));
    }
    if !(0.0..1.0).contains(&cfg.overlap_frac) {
        return Err(Error::InvalidArgument(format!(
            "overlap {} must lie in [0, 1)",
            cfg.overlap_frac
        )));
    }
    if samples.len() < len {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill one {len}-point segment",
            samples.len()
        )));
    }
    let step = ((len as f64 * (1.0 - cfg.overlap_frac)).round() as usize).max(1);
    let segments = (samples.len() - len) / step + 1;
    let window = hamming(len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::new().plan_fft_forward(len);
    let bins = len / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for s in 0..segments {
        let seg = &samples[s * step..s * step + len];
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
    }
    let scale = 1.0 / (sample_rate_hz * window_power * segments as f64);
    let nyquist_bin = if len.is_multiple_of(2) { Some(bins - 1) } else { None };
    Ok(acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || Some(k) == nyquist_bin { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect())
}

/// `10 log10` of the mean PSD over bins whose centre lies in `[low, high]`.
pub fn band_power_db(psd: &[f64], band_hz: (f64, f64), bin_hz: f64) -> Result<f64> {
    let (low, high) = band_hz;
    if !(low <= high) || !(bin_hz > 0.0) {
        return Err(Error::InvalidBand {
            low_hz: low,
            high_hz: high,
            reason: format!("degenerate band or bin width {bin_hz}"),
        });
    }
    let first = (low / bin_hz).ceil().max(0.0) as usize;
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, &p) in psd.iter().enumerate().skip(first) {
        let f = k as f64 * bin_hz;
        if f > high {
            break;
        }
        if f >= low {
            total += p;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidBand {
            low_hz: low,
            high_hz: high,
            reason: format!("no bin centre falls in the band at {bin_hz} Hz resolution"),
        });
    }
    Ok(10.0 * (total / count as f64).max(DB_FLOOR_POWER).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Direct O(n^2) DFT power of a Hamming-windowed segment.
    fn dft_power(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let w = hamming(n);
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, (&v, &wv)) in x.iter().zip(&w).enumerate() {
                    let ph = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += v * wv * ph.cos();
                    im += v * wv * ph.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
    }

    #[test]
    fn zero_signal_zero_psd() {
        let psd = welch_psd(&[0.0; 7500], 250.0, &WelchConfig::default()).unwrap();
        assert_eq!(psd.len(), 513);
        assert!(psd.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn tone_peak_matches_dft_oracle() {
        let fs = 250.0;
        let x: Vec<f64> = (0..7500).map(|t| (2.0 * PI * 10.0 * t as f64 / fs).sin()).collect();
        let psd = welch_psd(&x, fs, &WelchConfig::default()).unwrap();
        let oracle = dft_power(&x[..1024]);
        let expected = (10.0 / (fs / 1024.0)).round() as usize;
        assert_eq!(argmax(&oracle), expected);
        assert_eq!(argmax(&psd), expected);
    }

    #[test]
    fn white_noise_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..7500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let psd = welch_psd(&x, 250.0, &WelchConfig::default()).unwrap();
        let total: f64 = psd.iter().sum::<f64>() * 250.0 / 1024.0;
        assert!((total - 1.0).abs() < 0.1, "integrated power {total}");
    }

    #[test]
    fn scaling_by_a_squares_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..3000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let cfg = WelchConfig::default();
        let px = welch_psd(&x, 250.0, &cfg).unwrap();
        let py = welch_psd(&y, 250.0, &cfg).unwrap();
        for (a, b) in px.iter().zip(&py) {
            assert!((b - 9.0 * a).abs() <= 1e-9 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn short_window_is_insufficient() {
        assert!(matches!(
            welch_psd(&[1.0; 1000], 250.0, &WelchConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn band_power_examples() {
        let bin = 250.0 / 1024.0;
        assert_eq!(band_power_db(&[1.0; 513], (4.0, 7.0), bin).unwrap(), 0.0);
        assert!((band_power_db(&[100.0; 513], (8.0, 12.0), bin).unwrap() - 20.0).abs() < 1e-12);
        let mut psd = vec![0.0; 513];
        psd[200] = 5.0;
        assert_eq!(band_power_db(&psd, (4.0, 7.0), bin).unwrap(), -120.0);
        assert!(band_power_db(&psd, (4.0, 4.1), bin).is_err());
    }

    #[test]
    fn band_edges_are_inclusive() {
        // 1 Hz bins: the band [4, 7] holds bins 4, 5, 6, 7
        let mut psd = vec![0.0; 20];
        psd[4] = 4.0;
        psd[7] = 4.0;
        let db = band_power_db(&psd, (4.0, 7.0), 1.0).unwrap();
        assert!((db - 10.0 * 2.0f64.log10()).abs() < 1e-12);
    }
}
