//! WAV input/output and sample-rate conversion.
//!
//! Everything downstream of this module works on 16 kHz mono [`Waveform`]s.
//! Input files may be PCM16 or float32, mono or stereo; output is always PCM16 mono.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Working sample rate of the frontend.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// Taps per polyphase branch of the resampler.
const RESAMPLER_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Cutoff relative to the lower of the two Nyquist rates.
const RESAMPLER_ROLLOFF: f64 = 0.95;

/// A mono waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub id: String,
}

impl Waveform {
    /// Builds a waveform, checking that it is non-empty, finite and has a positive rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32, id: impl Into<String>) -> Result<Self> {
        let w = Waveform {
            samples,
            sample_rate,
            id: id.into(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if self.samples.is_empty() {
            return Err(Error::EmptyInput("waveform has no samples"));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squares, accumulated in ascending order so any permutation of the
    /// samples yields the identical value.
    pub fn energy(&self) -> f64 {
        let mut squares: Vec<f64> = self.samples.iter().map(|s| s * s).collect();
        squares.sort_by(f64::total_cmp);
        squares.iter().sum()
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Waveform {
        Waveform {
            samples,
            sample_rate: self.sample_rate,
            id: self.id.clone(),
        }
    }
}

/// A waveform labelled with its speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub wave: Waveform,
}

/// Reads a PCM16 or float32 WAV file, averaging stereo to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: format!("{channels} channels"),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {fmt:?}"),
            })
        }
    };

    let samples: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Waveform::new(samples, spec.sample_rate, id).map_err(|e| Error::Corpus {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn wav_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Error::MissingFile(path.to_path_buf())
        }
        // hound reports short reads as `Other`
        hound::Error::IoError(e)
            if matches!(e.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) =>
        {
            Error::MalformedWav {
                path: path.to_path_buf(),
                reason: e.to_string(),
            }
        }
        hound::Error::IoError(e) => Error::Io(e),
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: "unsupported format".into(),
        },
        other => Error::MalformedWav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Quantizes one amplitude to PCM16, clipping to [-1, 1] first.
pub fn quantize_pcm16(x: f64) -> i16 {
    let clipped = x.clamp(-1.0, 1.0);
    (clipped * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a 16-bit PCM mono WAV at the waveform's sample rate.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    w.validate()?;
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let path = path.as_ref();
    let io = |e: hound::Error| match e {
        hound::Error::IoError(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in &w.samples {
        writer.write_sample(quantize_pcm16(s)).map_err(io)?;
    }
    writer.finalize().map_err(io)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Polyphase filter bank: `up` branches of `RESAMPLER_TAPS` coefficients each.
struct PolyphaseBank {
    branches: Vec<[f64; RESAMPLER_TAPS]>,
}

impl PolyphaseBank {
    /// Tap `k` of branch `phase` weights source sample `i - HALF + 1 + k`, where `i`
    /// is the integer part of the output position.
    const HALF: usize = RESAMPLER_TAPS / 2;

    fn new(up: u64, down: u64) -> Self {
        let cutoff = RESAMPLER_ROLLOFF * (up as f64 / down as f64).min(1.0);
        let norm = bessel_i0(KAISER_BETA);
        let branches = (0..up)
            .map(|phase| {
                let frac = phase as f64 / up as f64;
                let mut taps = [0.0; RESAMPLER_TAPS];
                for (k, tap) in taps.iter_mut().enumerate() {
                    let offset = k as f64 - (Self::HALF as f64 - 1.0) - frac;
                    let u = offset / Self::HALF as f64;
                    let window = if u.abs() <= 1.0 {
                        bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / norm
                    } else {
                        0.0
                    };
                    *tap = cutoff * sinc(cutoff * offset) * window;
                }
                // unity DC gain per branch
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= sum);
                taps
            })
            .collect();
        PolyphaseBank { branches }
    }
}

/// Band-limited rate conversion with a Kaiser-windowed sinc polyphase filter.
///
/// Equal source and target rates return the input unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidParameter("target rate must be positive".into()));
    }
    w.validate()?;
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let g = gcd(w.sample_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = w.sample_rate as u64 / g;
    let bank = PolyphaseBank::new(up, down);

    let n_in = w.samples.len() as u64;
    let n_out = (n_in * up).div_ceil(down) as usize;
    let src = &w.samples;
    let half = PolyphaseBank::HALF as i64;

    let out = (0..n_out as u64)
        .map(|n| {
            let pos = n * down;
            let i = (pos / up) as i64;
            let taps = &bank.branches[(pos % up) as usize];
            let start = i - half + 1;
            taps.iter()
                .enumerate()
                .filter_map(|(k, &t)| {
                    let j = start + k as i64;
                    (j >= 0 && (j as u64) < n_in).then(|| t * src[j as usize])
                })
                .sum()
        })
        .collect();
    Ok(Waveform {
        samples: out,
        sample_rate: target_rate,
        id: w.id.clone(),
    })
}

/// Resamples to [`TARGET_SAMPLE_RATE`] when needed.
pub fn to_frontend_rate(w: &Waveform) -> Result<Waveform> {
    resample(w, TARGET_SAMPLE_RATE)
}
