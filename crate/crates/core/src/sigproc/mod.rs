//! Raw EEG to trial tables: band-pass, downsample, earlobe re-reference,
//! Welch band powers, and reaction-time based drowsiness labels.

mod filter;
pub mod io;
mod labels;
mod screen;
mod spectral;

pub use filter::{bandpass, design_bandpass};
pub use labels::{di, individualized_tau0, percentile, reaction_times, smooth_di, EventLog};
pub use screen::screen_outlier_features;
pub use spectral::{band_power_db, hamming, welch_psd, WelchConfig, DB_FLOOR_POWER};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const THETA_BAND: (f64, f64) = (4.0, 7.0);
pub const ALPHA_BAND: (f64, f64) = (8.0, 12.0);

/// Scalp channels after re-referencing a 32-channel cap.
pub const SCALP_CHANNELS: usize = 30;
/// `SCALP_CHANNELS` x {theta, alpha}.
pub const FEATURE_DIM: usize = 60;

/// Multichannel recording, channel-major, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub samples: Vec<Vec<f64>>,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    /// Indices of the two earlobe reference channels, `None` once removed.
    pub earlobe_indices: Option<(usize, usize)>,
}

impl RawRecording {
    pub fn new(
        samples: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
        earlobe_indices: Option<(usize, usize)>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        if samples.len() != channel_names.len() {
            return Err(Error::Shape(format!(
                "{} channels of data but {} channel names",
                samples.len(),
                channel_names.len()
            )));
        }
        if let Some(first) = samples.first() {
            if samples.iter().any(|ch| ch.len() != first.len()) {
                return Err(Error::Shape("channels have unequal lengths".into()));
            }
        }
        if let Some((a, b)) = earlobe_indices {
            if a >= samples.len() || b >= samples.len() || a == b {
                return Err(Error::Configuration(format!(
                    "earlobe indices ({a}, {b}) invalid for {} channels",
                    samples.len()
                )));
            }
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            channel_names,
            earlobe_indices,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }
}

/// Per-trial feature rows and drowsiness labels for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTable {
    pub subject_id: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub trial_times: Vec<f64>,
}

impl TrialTable {
    pub fn new(
        subject_id: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        trial_times: Vec<f64>,
    ) -> Result<Self> {
        let table = Self {
            subject_id: subject_id.into(),
            features,
            labels,
            trial_times,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.len();
        if self.labels.len() != n || self.trial_times.len() != n {
            return Err(Error::Shape(format!(
                "subject {}: {} feature rows, {} labels, {} times",
                self.subject_id,
                n,
                self.labels.len(),
                self.trial_times.len()
            )));
        }
        let d = self.dim();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Shape(format!(
                    "subject {}: row {i} has {} features, expected {d}",
                    self.subject_id,
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "subject {}: row {i} holds non-finite feature {v}",
                    self.subject_id
                )));
            }
        }
        if let Some((i, y)) = self.labels.iter().enumerate().find(|(_, y)| !(0.0..=1.0).contains(*y)) {
            return Err(Error::InvalidArgument(format!(
                "subject {}: label {y} at row {i} outside [0, 1]",
                self.subject_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn rows(&self, range: std::ops::Range<usize>) -> TrialTable {
        TrialTable {
            subject_id: self.subject_id.clone(),
            features: self.features[range.clone()].to_vec(),
            labels: self.labels[range.clone()].to_vec(),
            trial_times: self.trial_times[range].to_vec(),
        }
    }

    pub fn without_features(&self, drop: &[usize]) -> TrialTable {
        let keep: Vec<usize> = (0..self.dim()).filter(|l| !drop.contains(l)).collect();
        TrialTable {
            subject_id: self.subject_id.clone(),
            features: self
                .features
                .iter()
                .map(|r| keep.iter().map(|&l| r[l]).collect())
                .collect(),
            labels: self.labels.clone(),
            trial_times: self.trial_times.clone(),
        }
    }
}

/// Keeps every `factor`-th sample. The caller is responsible for having
/// band-limited the signal below the new Nyquist frequency.
pub fn decimate(recording: &RawRecording, factor: usize) -> Result<RawRecording> {
    if factor < 1 {
        return Err(Error::InvalidArgument("decimation factor must be >= 1".into()));
    }
    let keep = recording.len() / factor;
    let samples = recording
        .samples
        .iter()
        .map(|ch| (0..keep).map(|k| ch[k * factor]).collect())
        .collect();
    Ok(RawRecording {
        samples,
        sample_rate_hz: recording.sample_rate_hz / factor as f64,
        channel_names: recording.channel_names.clone(),
        earlobe_indices: recording.earlobe_indices,
    })
}

/// Subtracts the mean of the two earlobe channels from every other channel
/// and drops the earlobes.
pub fn rereference(recording: &RawRecording) -> Result<RawRecording> {
    let (a, b) = recording
        .earlobe_indices
        .ok_or_else(|| Error::Configuration("re-referencing needs two earlobe channels".into()))?;
    let n = recording.num_channels();
    if a >= n || b >= n || a == b {
        return Err(Error::Configuration(format!(
            "earlobe indices ({a}, {b}) invalid for {n} channels"
        )));
    }
    let reference: Vec<f64> = recording.samples[a]
        .iter()
        .zip(&recording.samples[b])
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    let mut samples = Vec::with_capacity(n - 2);
    let mut names = Vec::with_capacity(n - 2);
    for (k, ch) in recording.samples.iter().enumerate() {
        if k == a || k == b {
            continue;
        }
        samples.push(ch.iter().zip(&reference).map(|(x, r)| x - r).collect());
        names.push(recording.channel_names[k].clone());
    }
    Ok(RawRecording {
        samples,
        sample_rate_hz: recording.sample_rate_hz,
        channel_names: names,
        earlobe_indices: None,
    })
}

/// Feature extraction windowing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochConfig {
    pub epoch_s: f64,
    pub stride_s: f64,
    pub welch: WelchConfig,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            epoch_s: 30.0,
            stride_s: 3.0,
            welch: WelchConfig::default(),
        }
    }
}

/// Output of [`extract_features`]: one row per prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    /// Prediction time of each row: the end of its trailing window.
    pub times_s: Vec<f64>,
}

/// Number of prediction times for `n` samples.
pub fn epoch_count(n: usize, sample_rate_hz: f64, epoch_s: f64, stride_s: f64) -> usize {
    let epoch_n = (epoch_s * sample_rate_hz).round() as usize;
    let stride_n = ((stride_s * sample_rate_hz).round() as usize).max(1);
    if epoch_n == 0 || n < epoch_n {
        0
    } else {
        (n - epoch_n) / stride_n + 1
    }
}

/// Theta and alpha log band powers over a trailing window at every stride.
///
/// Row layout is channel-major within band: all theta channels first, then
/// all alpha channels.
pub fn extract_features(recording: &RawRecording, cfg: &EpochConfig) -> Result<FeatureMatrix> {
    let fs = recording.sample_rate_hz;
    if !(cfg.epoch_s > 0.0 && cfg.stride_s > 0.0) {
        return Err(Error::InvalidArgument("epoch and stride must be positive".into()));
    }
    let epoch_n = (cfg.epoch_s * fs).round() as usize;
    let stride_n = ((cfg.stride_s * fs).round() as usize).max(1);
    let count = epoch_count(recording.len(), fs, cfg.epoch_s, cfg.stride_s);
    if count == 0 {
        return Err(Error::InsufficientData(format!(
            "recording lasts {:.3} s, one epoch needs {} s",
            recording.duration_s(),
            cfg.epoch_s
        )));
    }
    if epoch_n < cfg.welch.fft_len {
        return Err(Error::InsufficientData(format!(
            "epoch of {epoch_n} samples is shorter than one {}-point Welch segment",
            cfg.welch.fft_len
        )));
    }
    let bin_hz = fs / cfg.welch.fft_len as f64;
    let channels = recording.num_channels();

    let rows: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let end = epoch_n + k * stride_n;
            let mut row = vec![0.0; 2 * channels];
            for (c, ch) in recording.samples.iter().enumerate() {
                let psd = welch_psd(&ch[end - epoch_n..end], fs, &cfg.welch)?;
                row[c] = band_power_db(&psd, THETA_BAND, bin_hz)?;
                row[channels + c] = band_power_db(&psd, ALPHA_BAND, bin_hz)?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let times_s = (0..count).map(|k| (epoch_n + k * stride_n) as f64 / fs).collect();
    Ok(FeatureMatrix { rows, times_s })
}

/// Column index of `(channel, band)` in the feature layout; band 0 is theta,
/// band 1 is alpha.
pub fn feature_index(channel: usize, band: usize, channels: usize) -> usize {
    band * channels + channel
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_recording(values: &[f64], len: usize, earlobes: Option<(usize, usize)>) -> RawRecording {
        RawRecording::new(
            values.iter().map(|&v| vec![v; len]).collect(),
            250.0,
            (0..values.len()).map(|i| format!("C{i}")).collect(),
            earlobes,
        )
        .unwrap()
    }

    #[test]
    fn decimate_identity_and_lengths() {
        let rec = RawRecording::new(
            vec![(0..1000).map(|v| v as f64).collect()],
            500.0,
            vec!["Cz".into()],
            None,
        )
        .unwrap();
        assert_eq!(decimate(&rec, 1).unwrap(), rec);
        let half = decimate(&rec, 2).unwrap();
        assert_eq!(half.sample_rate_hz, 250.0);
        assert_eq!(half.len(), 500);
        assert_eq!(decimate(&rec, 3).unwrap().len(), 333);
        assert!(decimate(&rec, 0).is_err());
    }

    #[test]
    fn rereference_arithmetic() {
        let rec = constant_recording(&[3.0, 1.0, 3.0], 10, Some((1, 2)));
        let out = rereference(&rec).unwrap();
        assert_eq!(out.num_channels(), 1);
        assert!(out.samples[0].iter().all(|&v| v == 1.0));
        assert_eq!(out.earlobe_indices, None);
    }

    #[test]
    fn rereference_zero_earlobes_and_common_mode() {
        let mut vals = vec![2.5; 32];
        let same = rereference(&constant_recording(&vals, 8, Some((30, 31)))).unwrap();
        assert_eq!(same.num_channels(), 30);
        assert!(same.samples.iter().flatten().all(|&v| v == 0.0));

        vals[30] = 0.0;
        vals[31] = 0.0;
        let rec = constant_recording(&vals, 8, Some((30, 31)));
        let out = rereference(&rec).unwrap();
        assert_eq!(out.samples, rec.samples[..30].to_vec());

        // re-referencing again against zero earlobes changes nothing
        let mut again = out.clone();
        again.samples.push(vec![0.0; 8]);
        again.samples.push(vec![0.0; 8]);
        again.channel_names.push("A1".into());
        again.channel_names.push("A2".into());
        again.earlobe_indices = Some((30, 31));
        assert_eq!(rereference(&again).unwrap().samples, out.samples);
    }

    #[test]
    fn rereference_needs_earlobes() {
        let rec = constant_recording(&[1.0, 2.0], 4, None);
        assert!(matches!(rereference(&rec), Err(Error::Configuration(_))));
    }

    #[test]
    fn epoch_count_arithmetic() {
        assert_eq!(epoch_count(3600 * 250, 250.0, 30.0, 3.0), 1191);
        assert_eq!(epoch_count(30 * 250, 250.0, 30.0, 3.0), 1);
        assert_eq!(epoch_count(29 * 250, 250.0, 30.0, 3.0), 0);
    }

    #[test]
    fn short_recording_is_insufficient() {
        let rec = constant_recording(&[1.0; 3], 29 * 250, None);
        assert!(matches!(
            extract_features(&rec, &EpochConfig::default()),
            Err(Error::InsufficientData(_))
        ));
        let rec = constant_recording(&[1.0; 3], 30 * 250, None);
        let f = extract_features(&rec, &EpochConfig::default()).unwrap();
        assert_eq!(f.rows.len(), 1);
        assert_eq!(f.rows[0].len(), 6);
        assert_eq!(f.times_s, vec![30.0]);
    }

    #[test]
    fn trial_table_validation() {
        assert!(TrialTable::new("s", vec![vec![1.0]], vec![1.5], vec![0.0]).is_err());
        assert!(TrialTable::new("s", vec![vec![f64::NAN]], vec![0.5], vec![0.0]).is_err());
        assert!(TrialTable::new("s", vec![vec![1.0], vec![1.0, 2.0]], vec![0.5, 0.5], vec![0.0, 3.0]).is_err());
        let t = TrialTable::new("s", vec![vec![1.0, 2.0, 3.0]], vec![0.5], vec![30.0]).unwrap();
        assert_eq!(t.without_features(&[1]).features, vec![vec![1.0, 3.0]]);
    }
}
