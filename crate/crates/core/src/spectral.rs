//! STFT magnitudes and the 80-band log-mel frontend.
//!
//! Defaults: 1280-point FFT, 1280-sample symmetric Hann window, hop 320, reflect
//! center padding, HTK mel scale over 0-8000 Hz, linear energies clamped at 1e-5
//! before the natural log.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::{Waveform, TARGET_SAMPLE_RATE};
use crate::error::{Error, Result};

pub const N_MELS: usize = 80;
pub const LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            n_fft: 1280,
            hop: 320,
            win_length: 1280,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.win_length == 0 || self.n_fft == 0 {
            return Err(Error::InvalidParameter("STFT sizes must be positive".into()));
        }
        if !(self.hop <= self.win_length && self.win_length <= self.n_fft) {
            return Err(Error::InvalidParameter(format!(
                "need hop <= win_length <= n_fft, got {} / {} / {}",
                self.hop, self.win_length, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for `n` input samples.
    pub fn frame_count(&self, n: usize) -> usize {
        if self.center {
            1 + n / self.hop
        } else if n < self.n_fft {
            1
        } else {
            1 + (n - self.n_fft) / self.hop
        }
    }

    /// Symmetric Hann window of `win_length`, zero-padded to `n_fft` (centred).
    pub fn window(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_fft];
        let offset = (self.n_fft - self.win_length) / 2;
        let l = self.win_length;
        for n in 0..l {
            out[offset + n] = if l == 1 {
                1.0
            } else {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (l - 1) as f64).cos()
            };
        }
        out
    }
}

/// Magnitude spectrogram, frames × (n_fft/2 + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    /// Frequency in Hz of bin `k`.
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.config.n_fft as f64
    }
}

/// Log-mel matrix, frames × bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub sample_rate: u32,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_bands(&self) -> usize {
        self.values.ncols()
    }

    /// Writes frames as CSV rows, one column per band.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.n_bands()).map(|b| format!("mel{b}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in self.values.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Maps index `i` (possibly outside `0..n`) into range by mirror reflection
/// without repeating the edge sample.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Short-time Fourier transform magnitudes.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if w.samples.is_empty() {
        return Err(Error::EmptyInput("stft of empty waveform"));
    }
    let n = w.samples.len();
    let n_fft = cfg.n_fft;
    let pad = if cfg.center { n_fft / 2 } else { 0 };
    let frames = cfg.frame_count(n);
    let window = cfg.window();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n_fft);

    let sample_at = |i: isize| -> f64 {
        if cfg.center {
            w.samples[reflect_index(i, n)]
        } else if i >= 0 && (i as usize) < n {
            w.samples[i as usize]
        } else {
            0.0
        }
    };

    let n_bins = cfg.n_bins();
    let mut magnitudes = Array2::zeros((frames, n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (t, mut row) in magnitudes.axis_iter_mut(Axis(0)).enumerate() {
        let start = (t * cfg.hop) as isize - pad as isize;
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(sample_at(start + k as isize) * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (dst, c) in row.iter_mut().zip(&buf[..n_bins]) {
            *dst = c.norm();
        }
    }
    Ok(Spectrogram {
        magnitudes,
        config: *cfg,
        sample_rate: w.sample_rate,
    })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of `n_mels` filters equally spaced on the mel scale.
pub fn mel_center_frequencies(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    mel_edges(n_mels, fmin, fmax)[1..=n_mels].to_vec()
}

fn mel_edges(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular mel filterbank, `n_mels × (n_fft/2 + 1)`, peak value 1 per filter.
pub fn mel_filterbank(
    sample_rate: u32,
    n_fft: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<Array2<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels == 0 || n_fft == 0 || sample_rate == 0 {
        return Err(Error::InvalidParameter(
            "filterbank sizes must be positive".into(),
        ));
    }
    if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= fmin < fmax <= {nyquist}, got {fmin}..{fmax}"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let edges = mel_edges(n_mels, fmin, fmax);
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut fb = Array2::zeros((n_mels, n_bins));
    for (m, mut row) in fb.axis_iter_mut(Axis(0)).enumerate() {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, v) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - left) / (centre - left);
            let falling = (right - f) / (right - centre);
            *v = rising.min(falling).max(0.0);
        }
        if !row.iter().any(|&v| v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mel filter {m} covers no FFT bin; reduce n_mels or increase n_fft"
            )));
        }
    }
    Ok(fb)
}

/// `ln(max(fb · |X_t|, LOG_FLOOR))` per frame.
pub fn log_mel(spec: &Spectrogram, fb: &Array2<f64>) -> Result<MelSpectrogram> {
    if fb.ncols() != spec.magnitudes.ncols() {
        return Err(Error::dims(
            format!("filterbank with {} columns", spec.magnitudes.ncols()),
            format!("{} columns", fb.ncols()),
        ));
    }
    let values = spec
        .magnitudes
        .dot(&fb.t())
        .mapv(|e| e.max(LOG_FLOOR).ln());
    Ok(MelSpectrogram {
        values,
        sample_rate: spec.sample_rate,
    })
}

/// STFT configuration plus a precomputed filterbank.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub stft: StftConfig,
    pub filterbank: Array2<f64>,
    pub sample_rate: u32,
}

impl Frontend {
    pub fn new(stft: StftConfig, sample_rate: u32, n_mels: usize, fmin: f64, fmax: f64) -> Result<Self> {
        stft.validate()?;
        let filterbank = mel_filterbank(sample_rate, stft.n_fft, n_mels, fmin, fmax)?;
        Ok(Frontend {
            stft,
            filterbank,
            sample_rate,
        })
    }

    pub fn with_stft(stft: StftConfig) -> Result<Self> {
        Frontend::new(stft, TARGET_SAMPLE_RATE, N_MELS, 0.0, TARGET_SAMPLE_RATE as f64 / 2.0)
    }

    /// Log-mel of a waveform at the frontend rate.
    pub fn mel(&self, w: &Waveform) -> Result<MelSpectrogram> {
        if w.sample_rate != self.sample_rate {
            return Err(Error::InvalidParameter(format!(
                "frontend expects {} Hz input, got {} Hz",
                self.sample_rate, w.sample_rate
            )));
        }
        log_mel(&stft(w, &self.stft)?, &self.filterbank)
    }
}

impl Default for Frontend {
    fn default() -> Self {
        Frontend::with_stft(StftConfig::default()).expect("default frontend is valid")
    }
}

/// Indices of the `k` largest entries of a frame, largest first.
pub fn top_bins(frame: ArrayView1<'_, f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..frame.len()).collect();
    idx.sort_by(|&a, &b| frame[b].total_cmp(&frame[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, n: usize, rate: u32) -> Waveform {
        let samples = (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate, "sine").unwrap()
    }

    /// Direct-loop oracle for the centred frame count.
    fn count_frames_by_loop(n: usize, n_fft: usize, hop: usize) -> usize {
        let padded = n + 2 * (n_fft / 2);
        let mut start = 0;
        let mut count = 0;
        while start + n_fft <= padded {
            count += 1;
            start += hop;
        }
        count
    }

    /// O(N^2) DFT magnitude oracle.
    fn dft_magnitudes(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..n / 2 + 1)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &x) in frame.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn frame_count_matches_loop_oracle() {
        let cfg = StftConfig::default();
        assert_eq!(count_frames_by_loop(3200, 1280, 320), 11);
        for n in [1, 5, 319, 320, 321, 3200, 4001, 16000] {
            assert_eq!(cfg.frame_count(n), count_frames_by_loop(n, 1280, 320), "n = {n}");
        }
        let spec = stft(&sine(440.0, 3200, 16000), &cfg).unwrap();
        assert_eq!(spec.n_frames(), 11);
        assert_eq!(spec.magnitudes.ncols(), 641);
    }

    #[test]
    fn dc_concentrates_in_bin_zero() {
        let w = Waveform::new(vec![0.3; 4000], 16000, "dc").unwrap();
        let spec = stft(&w, &StftConfig::default()).unwrap();
        for row in spec.magnitudes.rows() {
            assert_eq!(top_bins(row, 1), vec![0]);
            let total: f64 = row.iter().map(|v| v * v).sum();
            assert!(row[0] * row[0] / total > 0.6);
        }
    }

    #[test]
    fn thousand_hz_peaks_at_bin_80() {
        let w = sine(1000.0, 16000, 16000);
        let spec = stft(&w, &StftConfig::default()).unwrap();
        assert!((spec.bin_hz(80) - 1000.0).abs() < 1e-12);
        let cfg = StftConfig::default();
        let win = cfg.window();
        // interior frame against the O(N^2) oracle
        let t = 20;
        let start = t * cfg.hop - cfg.n_fft / 2;
        let frame: Vec<f64> = (0..cfg.n_fft).map(|k| w.samples[start + k] * win[k]).collect();
        let oracle = dft_magnitudes(&frame);
        let oracle_peak = (0..oracle.len())
            .max_by(|&a, &b| oracle[a].total_cmp(&oracle[b]))
            .unwrap();
        assert_eq!(oracle_peak, 80);
        for (a, b) in spec.magnitudes.row(t).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
        }
        // frames clear of the reflected edges
        for t in 2..spec.n_frames() - 2 {
            assert_eq!(top_bins(spec.magnitudes.row(t), 1), vec![80]);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let samples: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
        let w = Waveform::new(samples, 16000, "noise").unwrap();
        let spec = stft(&w, &cfg).unwrap();
        let win = cfg.window();
        let n = w.len();
        for t in 0..spec.n_frames() {
            let start = (t * cfg.hop) as isize - (cfg.n_fft / 2) as isize;
            let energy: f64 = (0..cfg.n_fft)
                .map(|k| (w.samples[reflect_index(start + k as isize, n)] * win[k]).powi(2))
                .sum();
            let row = spec.magnitudes.row(t);
            let last = cfg.n_bins() - 1;
            // one-sided spectrum: interior bins stand for two
            let spectral: f64 = row
                .iter()
                .enumerate()
                .map(|(k, m)| if k == 0 || k == last { m * m } else { 2.0 * m * m })
                .sum();
            let rel = (spectral - cfg.n_fft as f64 * energy).abs() / (cfg.n_fft as f64 * energy);
            assert!(rel < 1e-6, "frame {t}: {rel}");
        }
    }

    #[test]
    fn reflect_padding_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect_index(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect_index(-7, 1), 0);
        // short signals still give the full frame count
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 16000, "short").unwrap();
        assert_eq!(stft(&w, &StftConfig::default()).unwrap().n_frames(), 1);
    }

    #[test]
    fn stft_errors() {
        let w = Waveform {
            samples: vec![],
            sample_rate: 16000,
            id: String::new(),
        };
        assert!(stft(&w, &StftConfig::default()).is_err());
        let bad = StftConfig {
            hop: 2000,
            ..StftConfig::default()
        };
        assert!(stft(&sine(100.0, 100, 16000), &bad).is_err());
    }

    #[test]
    fn filterbank_shape_and_shape_of_rows() {
        let fb = mel_filterbank(16000, 1280, 80, 0.0, 8000.0).unwrap();
        assert_eq!(fb.dim(), (80, 641));
        for row in fb.rows() {
            assert!(row.iter().all(|&v| v >= 0.0));
            let support: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
            assert!(!support.is_empty());
            // contiguous support
            assert_eq!(support.last().unwrap() - support[0] + 1, support.len());
        }
    }

    #[test]
    fn centre_frequencies_follow_htk_formula() {
        let centres = mel_center_frequencies(80, 0.0, 8000.0);
        assert!(centres.windows(2).all(|p| p[1] > p[0]));
        let top = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
        for (i, c) in centres.iter().enumerate() {
            let mel = top * (i + 1) as f64 / 81.0;
            let hz = 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
            assert!((c - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn filterbank_parameter_errors() {
        assert!(mel_filterbank(16000, 1280, 80, 0.0, 9000.0).is_err());
        assert!(mel_filterbank(16000, 1280, 80, 500.0, 500.0).is_err());
        assert!(mel_filterbank(16000, 1280, 80, -1.0, 8000.0).is_err());
        assert!(mel_filterbank(16000, 64, 80, 0.0, 8000.0).is_err());
    }

    fn spectrogram(magnitudes: Array2<f64>) -> Spectrogram {
        Spectrogram {
            magnitudes,
            config: StftConfig {
                n_fft: 4,
                hop: 1,
                win_length: 4,
                center: true,
            },
            sample_rate: 16000,
        }
    }

    #[test]
    fn log_mel_floor_and_hand_case() {
        let fb = Array2::from_shape_vec((1, 3), vec![1.0, 0.0, 0.0]).unwrap();
        let one = spectrogram(Array2::from_shape_vec((1, 3), vec![1.0, 5.0, 7.0]).unwrap());
        assert_eq!(log_mel(&one, &fb).unwrap().values[[0, 0]], 0.0);

        let zeros = spectrogram(Array2::zeros((4, 3)));
        let fb2 = Array2::from_elem((2, 3), 0.5);
        let mel = log_mel(&zeros, &fb2).unwrap();
        assert!(mel.values.iter().all(|&v| v == LOG_FLOOR.ln()));

        let wrong = Array2::zeros((2, 5));
        assert!(log_mel(&zeros, &wrong).is_err());
    }

    #[test]
    fn log_mel_homogeneity_and_monotonicity() {
        let fb = mel_filterbank(16000, 1280, 80, 0.0, 8000.0).unwrap();
        let spec = stft(&sine(300.0, 4000, 16000), &StftConfig::default()).unwrap();
        let base = log_mel(&spec, &fb).unwrap();
        let doubled = Spectrogram {
            magnitudes: &spec.magnitudes * 2.0,
            ..spec.clone()
        };
        let mel2 = log_mel(&doubled, &fb).unwrap();
        for (a, b) in base.values.iter().zip(mel2.values.iter()) {
            assert!(b >= a);
            if *a > LOG_FLOOR.ln() {
                assert!((b - a - 2f64.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn frontend_rejects_wrong_rate() {
        let fe = Frontend::default();
        assert!(fe.mel(&sine(100.0, 4000, 22050)).is_err());
        let mel = fe.mel(&sine(100.0, 3200, 16000)).unwrap();
        assert_eq!(mel.values.dim(), (11, 80));
    }

    #[test]
    fn mel_csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let mel = Frontend::default().mel(&sine(200.0, 1600, 16000)).unwrap();
        let p = dir.path().join("mel.csv");
        mel.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1 + mel.n_frames());
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 80);
    }
}
