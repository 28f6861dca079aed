//! Full-utterance and short-time (segment-wise) time reversal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};

/// A reversal strategy: the whole utterance, or contiguous segments of `window_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReversalSpec {
    Full,
    Windowed { window_ms: f64 },
}

impl ReversalSpec {
    pub fn windowed(window_ms: f64) -> Result<Self> {
        let spec = ReversalSpec::Windowed { window_ms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ReversalSpec::Full => Ok(()),
            ReversalSpec::Windowed { window_ms } if window_ms.is_finite() && window_ms > 0.0 => {
                Ok(())
            }
            ReversalSpec::Windowed { window_ms } => Err(Error::InvalidParameter(format!(
                "window_ms must be positive, got {window_ms}"
            ))),
        }
    }

    /// Short label used in reports: `full` or e.g. `20ms`.
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// The short-time strategies {10, 20, 50, 100, 200, 500 ms} followed by full reversal.
    pub fn table_strategies() -> Vec<ReversalSpec> {
        [10.0, 20.0, 50.0, 100.0, 200.0, 500.0]
            .into_iter()
            .map(|window_ms| ReversalSpec::Windowed { window_ms })
            .chain(std::iter::once(ReversalSpec::Full))
            .collect()
    }
}

impl fmt::Display for ReversalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReversalSpec::Full => f.write_str("full"),
            ReversalSpec::Windowed { window_ms } => write!(f, "{window_ms}ms"),
        }
    }
}

impl FromStr for ReversalSpec {
    type Err = Error;

    /// Accepts `full`, `20ms` or a bare number of milliseconds.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(ReversalSpec::Full);
        }
        let number = s.strip_suffix("ms").unwrap_or(s);
        let window_ms: f64 = number
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad reversal strategy {s:?}")))?;
        ReversalSpec::windowed(window_ms)
    }
}

/// Sample `i` of the output is sample `N - 1 - i` of the input.
pub fn reverse_full(w: &Waveform) -> Waveform {
    let mut samples = w.samples.clone();
    samples.reverse();
    w.with_samples(samples)
}

/// Segment length in samples for a window in milliseconds, rounded to nearest.
pub fn segment_len(window_ms: f64, sample_rate: u32) -> Result<usize> {
    if !(window_ms.is_finite() && window_ms > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window_ms must be positive, got {window_ms}"
        )));
    }
    let len = (window_ms * sample_rate as f64 / 1000.0).round();
    if len < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "{window_ms} ms is shorter than one sample at {sample_rate} Hz"
        )));
    }
    Ok(len as usize)
}

/// Reverses contiguous, non-overlapping segments in place. A shorter tail segment is
/// reversed as well, so length and energy are unchanged.
pub fn reverse_windowed(w: &Waveform, window_ms: f64) -> Result<Waveform> {
    let seg = segment_len(window_ms, w.sample_rate)?;
    Ok(w.with_samples(reverse_segments(&w.samples, seg)))
}

pub(crate) fn reverse_segments(samples: &[f64], seg: usize) -> Vec<f64> {
    let mut out = samples.to_vec();
    out.chunks_mut(seg).for_each(<[f64]>::reverse);
    out
}

pub fn apply_reversal(w: &Waveform, spec: &ReversalSpec) -> Result<Waveform> {
    spec.validate()?;
    match *spec {
        ReversalSpec::Full => Ok(reverse_full(w)),
        ReversalSpec::Windowed { window_ms } => reverse_windowed(w, window_ms),
    }
}
