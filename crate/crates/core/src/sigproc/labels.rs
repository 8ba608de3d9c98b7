use crate::error::{Error, Result};

/// Lane-deviation and steering-response onsets, in seconds, paired by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub deviation_onsets: Vec<f64>,
    pub response_onsets: Vec<f64>,
}

impl EventLog {
    pub fn new(deviation_onsets: Vec<f64>, response_onsets: Vec<f64>) -> Result<Self> {
        let log = Self {
            deviation_onsets,
            response_onsets,
        };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        if self.deviation_onsets.len() != self.response_onsets.len() {
            return Err(Error::MalformedLog(format!(
                "{} deviation onsets but {} response onsets",
                self.deviation_onsets.len(),
                self.response_onsets.len()
            )));
        }
        for (k, (d, r)) in self.deviation_onsets.iter().zip(&self.response_onsets).enumerate() {
            if !(d.is_finite() && r.is_finite()) {
                return Err(Error::MalformedLog(format!("event {k} has a non-finite onset")));
            }
            if r < d {
                return Err(Error::MalformedLog(format!(
                    "event {k}: response at {r} s precedes deviation at {d} s"
                )));
            }
        }
        for (name, onsets) in [
            ("deviation", &self.deviation_onsets),
            ("response", &self.response_onsets),
        ] {
            if let Some(k) = onsets.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::MalformedLog(format!(
                    "{name} onsets not strictly increasing at event {}",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.deviation_onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deviation_onsets.is_empty()
    }
}

pub fn reaction_times(log: &EventLog) -> Result<Vec<f64>> {
    log.validate()?;
    Ok(log
        .deviation_onsets
        .iter()
        .zip(&log.response_onsets)
        .map(|(d, r)| r - d)
        .collect())
}

/// Drowsiness index `max(0, (1 - e^-(tau - tau0)) / (1 + e^-(tau - tau0)))`.
///
/// The ratio equals `tanh((tau - tau0) / 2)`, which is what is evaluated
/// here; it stays accurate for large arguments where the exponential form
/// would overflow.
pub fn di(tau: f64, tau0: f64) -> f64 {
    ((tau - tau0) / 2.0).tanh().max(0.0)
}

/// Trailing moving average over `window_s / step_s` samples; the first
/// outputs average over however many samples exist so far.
pub fn smooth_di(series: &[f64], window_s: f64, step_s: f64) -> Vec<f64> {
    let width = ((window_s / step_s).round() as usize).max(1);
    (0..series.len())
        .map(|k| {
            let window = &series[(k + 1).saturating_sub(width)..=k];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}

/// Percentile `p` in `[0, 100]` by linear interpolation between closest
/// ranks (`h = (n - 1) p / 100`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("percentile of an empty sample".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Session-specific `tau0`: the 5th percentile of the reaction times.
pub fn individualized_tau0(taus: &[f64]) -> Result<f64> {
    percentile(taus, 5.0)
}
