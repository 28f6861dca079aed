//! F0 contours by normalized autocorrelation, per-utterance log-F0 normalization
//! and a contour correlation used as a prosody proxy.

use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    pub fmax: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        PitchConfig {
            frame_ms: 40.0,
            hop_ms: 20.0,
            fmin: 50.0,
            fmax: 600.0,
            voicing_threshold: 0.5,
        }
    }
}

/// Candidates within this fraction of the best peak are preferred at shorter lags,
/// which avoids picking a multiple of the period.
const SUBHARMONIC_TOLERANCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchContour {
    /// Hz per frame, 0 where unvoiced.
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
    pub hop: usize,
    pub sample_rate: u32,
}

impl PitchContour {
    /// Builds a contour from raw F0 values; non-positive entries are unvoiced.
    pub fn from_f0(f0: Vec<f64>, hop: usize, sample_rate: u32) -> Self {
        let voiced = f0.iter().map(|&f| f > 0.0).collect();
        let f0 = f0.into_iter().map(|f| f.max(0.0)).collect();
        PitchContour {
            f0,
            voiced,
            hop,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }

    /// Voiced F0 values in frame order.
    pub fn voiced_f0(&self) -> Vec<f64> {
        self.f0
            .iter()
            .zip(&self.voiced)
            .filter_map(|(&f, &v)| v.then_some(f))
            .collect()
    }

    pub fn median_voiced_f0(&self) -> Option<f64> {
        let mut v = self.voiced_f0();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        Some(if v.len() % 2 == 1 {
            v[mid]
        } else {
            0.5 * (v[mid - 1] + v[mid])
        })
    }

    /// Same contour with frame order reversed.
    pub fn frame_reversed(&self) -> PitchContour {
        let mut out = self.clone();
        out.f0.reverse();
        out.voiced.reverse();
        out
    }
}

fn ms_to_samples(ms: f64, rate: u32) -> usize {
    (ms * rate as f64 / 1000.0).round() as usize
}

/// Normalized autocorrelation at `lag` over one frame.
fn normalized_autocorr(frame: &[f64], lag: usize) -> f64 {
    if lag >= frame.len() {
        return 0.0;
    }
    let head = &frame[..frame.len() - lag];
    let tail = &frame[lag..];
    let (mut cross, mut e_head, mut e_tail) = (0.0, 0.0, 0.0);
    for (a, b) in head.iter().zip(tail) {
        cross += a * b;
        e_head += a * a;
        e_tail += b * b;
    }
    let denom = (e_head * e_tail).sqrt();
    if denom <= f64::MIN_POSITIVE {
        0.0
    } else {
        cross / denom
    }
}

/// F0 of one frame, or `None` if unvoiced.
fn frame_f0(frame: &[f64], rate: u32, cfg: &PitchConfig) -> Option<f64> {
    let min_lag = ((rate as f64 / cfg.fmax).ceil() as usize).max(2);
    let max_lag = (rate as f64 / cfg.fmin).ceil() as usize;
    if max_lag + 1 >= frame.len() {
        return None;
    }
    let corr: Vec<f64> = (0..=max_lag + 1)
        .map(|lag| {
            if lag + 1 < min_lag {
                0.0
            } else {
                normalized_autocorr(frame, lag)
            }
        })
        .collect();

    let best = (min_lag..=max_lag).map(|l| corr[l]).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= cfg.voicing_threshold) {
        return None;
    }
    let lag = (min_lag..=max_lag).find(|&l| {
        corr[l] >= SUBHARMONIC_TOLERANCE * best && corr[l] >= corr[l - 1] && corr[l] >= corr[l + 1]
    })?;

    // parabolic refinement around the integer peak
    let (y0, y1, y2) = (corr[lag - 1], corr[lag], corr[lag + 1]);
    let curvature = y0 - 2.0 * y1 + y2;
    let delta = if curvature < 0.0 {
        (0.5 * (y0 - y2) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let f0 = rate as f64 / (lag as f64 + delta);
    Some(f0.clamp(cfg.fmin, cfg.fmax))
}

/// Per-frame F0 with default band (50-600 Hz) and voicing threshold.
pub fn estimate_f0(w: &Waveform, frame_ms: f64, hop_ms: f64) -> Result<PitchContour> {
    estimate_f0_with(
        w,
        &PitchConfig {
            frame_ms,
            hop_ms,
            ..PitchConfig::default()
        },
    )
}

pub fn estimate_f0_with(w: &Waveform, cfg: &PitchConfig) -> Result<PitchContour> {
    if w.samples.is_empty() {
        return Err(Error::EmptyInput("pitch estimation on empty waveform"));
    }
    if !(cfg.fmin > 0.0 && cfg.fmin < cfg.fmax) {
        return Err(Error::InvalidParameter(format!(
            "bad F0 band {}..{}",
            cfg.fmin, cfg.fmax
        )));
    }
    let min_frame_ms = 2000.0 / cfg.fmin;
    if !(cfg.frame_ms >= min_frame_ms - 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "frame of {} ms is shorter than two periods of {} Hz",
            cfg.frame_ms, cfg.fmin
        )));
    }
    let frame_len = ms_to_samples(cfg.frame_ms, w.sample_rate);
    let hop = ms_to_samples(cfg.hop_ms, w.sample_rate);
    if hop == 0 {
        return Err(Error::InvalidParameter("hop shorter than one sample".into()));
    }

    let n = w.samples.len();
    let frames = if n >= frame_len {
        1 + (n - frame_len) / hop
    } else {
        1
    };
    let mut padded = vec![0.0; frame_len];
    let f0: Vec<f64> = (0..frames)
        .map(|t| {
            let start = t * hop;
            let end = (start + frame_len).min(n);
            let frame = if end - start == frame_len {
                &w.samples[start..end]
            } else {
                padded.fill(0.0);
                padded[..end - start].copy_from_slice(&w.samples[start..end]);
                &padded[..]
            };
            frame_f0(frame, w.sample_rate, cfg).unwrap_or(0.0)
        })
        .collect();
    Ok(PitchContour::from_f0(f0, hop, w.sample_rate))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Z-score of log-F0 over voiced frames; unvoiced frames map to 0. A contour with
/// zero log-F0 variance normalizes to all zeros.
pub fn normalize_f0(p: &PitchContour) -> Result<Vec<f64>> {
    let logs: Vec<f64> = p.voiced_f0().iter().map(|f| f.ln()).collect();
    if logs.is_empty() {
        return Err(Error::NoVoicedFrames);
    }
    let (mean, std) = mean_std(&logs);
    let degenerate = std <= 1e-12 * mean.abs().max(1.0);
    Ok(p.f0
        .iter()
        .zip(&p.voiced)
        .map(|(&f, &v)| {
            if !v || degenerate {
                0.0
            } else {
                (f.ln() - mean) / std
            }
        })
        .collect())
}

/// Pearson correlation of F0 over frames voiced in both contours.
pub fn contour_correlation(a: &PitchContour, b: &PitchContour) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(
            format!("{} frames", a.len()),
            format!("{} frames", b.len()),
        ));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .f0
        .iter()
        .zip(&b.f0)
        .zip(a.voiced.iter().zip(&b.voiced))
        .filter_map(|((&x, &y), (&va, &vb))| (va && vb).then_some((x, y)))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::TooFewVoicedFrames(xs.len()));
    }
    let (mx, sx) = mean_std(&xs);
    let (my, sy) = mean_std(&ys);
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::InvalidParameter(
            "correlation undefined for a constant contour".into(),
        ));
    }
    let cov = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.len() as f64;
    Ok((cov / (sx * sy)).clamp(-1.0, 1.0))
}
