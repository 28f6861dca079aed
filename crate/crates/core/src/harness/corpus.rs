use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::CorpusSpec;
use crate::audio_io::{read_wav, write_wav, Utterance, Waveform, TARGET_SAMPLE_RATE};
use crate::error::{Error, Result};

/// Synthetic utterance lengths are whole multiples of this many samples.
const LENGTH_QUANTUM: usize = 320;

struct SpeakerTraits {
    f0: f64,
    formants: [(f64, f64); 3],
    tilt: f64,
}

fn speaker_traits(seed: u64, speaker: usize) -> SpeakerTraits {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(speaker as u64);
    SpeakerTraits {
        f0: rng.gen_range(90.0..300.0),
        formants: [
            (rng.gen_range(300.0..900.0), rng.gen_range(60.0..120.0)),
            (rng.gen_range(900.0..2400.0), rng.gen_range(80.0..160.0)),
            (rng.gen_range(2400.0..3600.0), rng.gen_range(120.0..240.0)),
        ],
        tilt: rng.gen_range(0.6..1.4),
    }
}

fn envelope_gain(t: &SpeakerTraits, f: f64) -> f64 {
    let resonance: f64 = t
        .formants
        .iter()
        .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
        .sum();
    (0.02 + resonance) * (100.0 / f.max(100.0)).powf(t.tilt)
}

/// One harmonic utterance: speaker F0 and formants, utterance-specific glide,
/// length and amplitude modulation, plus a little aspiration noise.
pub fn synth_utterance(seed: u64, speaker: usize, utt: usize) -> Result<Utterance> {
    let traits = speaker_traits(seed, speaker);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 32) | ((speaker as u64) << 16) | utt as u64);

    let sr = TARGET_SAMPLE_RATE as f64;
    let n = LENGTH_QUANTUM * rng.gen_range(40..=64);
    let glide: f64 = rng.gen_range(0.85..1.2);
    let start = traits.f0 * rng.gen_range(0.95..1.05);
    let vib_rate = rng.gen_range(4.0..6.5);
    let vib_depth = rng.gen_range(0.005..0.02);
    let am_rate = rng.gen_range(2.5..5.0);
    let am_phase = rng.gen_range(0.0..2.0 * PI);

    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let x = i as f64 / n as f64;
        let t = i as f64 / sr;
        let f0 = start * glide.powf(x) * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin());
        phase += 2.0 * PI * f0 / sr;
        let mut v = 0.0;
        let mut k = 1;
        while k as f64 * f0 < 0.45 * sr {
            v += envelope_gain(&traits, k as f64 * f0) * (k as f64 * phase).sin();
            k += 1;
        }
        let env = (PI * x).sin().powf(0.5) * (0.75 + 0.25 * (2.0 * PI * am_rate * t + am_phase).sin());
        samples.push(env * v + 0.002 * rng.gen_range(-1.0..1.0));
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    samples.iter_mut().for_each(|v| *v *= 0.5 / peak);

    let id = format!("spk{speaker}_utt{utt}");
    Ok(Utterance {
        speaker: format!("spk{speaker}"),
        wave: Waveform::new(samples, TARGET_SAMPLE_RATE, id)?,
    })
}

/// `n_speakers * utts_per_speaker` utterances, speaker-major. Deterministic in `seed`;
/// each utterance depends only on (seed, speaker, utterance index).
pub fn synth_corpus(n_speakers: usize, utts_per_speaker: usize, seed: u64) -> Result<Vec<Utterance>> {
    if n_speakers < 1 || utts_per_speaker < 1 {
        return Err(Error::InvalidParameter(format!(
            "synthetic corpus needs >= 1 speaker and utterance, got {n_speakers} x {utts_per_speaker}"
        )));
    }
    (0..n_speakers)
        .flat_map(|s| (0..utts_per_speaker).map(move |u| (s, u)))
        .map(|(s, u)| synth_utterance(seed, s, u))
        .collect()
}

fn label_from_stem(stem: &str) -> String {
    stem.split('_').next().unwrap_or(stem).to_string()
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            files.extend(wav_files(&path)?);
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Every `.wav` under `dir`. Files in a subdirectory are labelled by the
/// first-level subdirectory name; files at the top level by the stem prefix before `_`.
pub fn load_corpus_dir(dir: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let files = wav_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyInput("corpus directory holds no .wav files"));
    }
    files
        .into_iter()
        .map(|path| {
            let rel = path.strip_prefix(dir).expect("walked from dir");
            let speaker = match rel.components().count() {
                1 => label_from_stem(&path.file_stem().unwrap_or_default().to_string_lossy()),
                _ => rel.components().next().unwrap().as_os_str().to_string_lossy().into_owned(),
            };
            let wave = read_wav(&path).map_err(|e| Error::Corpus {
                path: path.clone(),
                source: Box::new(e),
            })?;
            Ok(Utterance { speaker, wave })
        })
        .collect()
}

pub fn load_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<Utterance>> {
    match spec {
        CorpusSpec::Synthetic { speakers, utterances } => synth_corpus(*speakers, *utterances, seed),
        CorpusSpec::Directory { path } => load_corpus_dir(path),
    }
}

/// Writes `<id>.wav` for every utterance into `dir`, creating it if needed.
pub fn write_corpus(corpus: &[Utterance], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    corpus
        .iter()
        .map(|u| {
            let path = dir.join(format!("{}.wav", u.wave.id));
            write_wav(&u.wave, &path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_labelled() {
        let a = synth_corpus(3, 2, 7).unwrap();
        let b = synth_corpus(3, 2, 7).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a[3].speaker, "spk1");
        assert_eq!(a[3].wave.id, "spk1_utt1");
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.wave.samples, y.wave.samples);
        }
        assert_ne!(synth_corpus(3, 2, 8).unwrap()[0].wave.samples, a[0].wave.samples);
        // an utterance does not depend on the corpus shape
        assert_eq!(synth_corpus(4, 5, 7).unwrap()[3 * 5 + 1].wave.samples, synth_utterance(7, 3, 1).unwrap().wave.samples);
        for u in &a {
            assert_eq!(u.wave.len() % LENGTH_QUANTUM, 0);
            assert_eq!(u.wave.sample_rate, 16000);
            assert!(u.wave.samples.iter().all(|v| v.abs() <= 0.5 + 1e-12));
        }
        assert!(synth_corpus(0, 2, 7).is_err());
        assert!(synth_corpus(2, 0, 7).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let corpus = synth_corpus(2, 2, 1).unwrap();
        write_corpus(&corpus, tmp.path()).unwrap();
        let nested = tmp.path().join("alice");
        std::fs::create_dir(&nested).unwrap();
        write_wav(&corpus[0].wave, nested.join("take1.wav")).unwrap();

        let loaded = load_corpus_dir(tmp.path()).unwrap();
        assert_eq!(loaded.len(), 5);
        let labels: Vec<&str> = loaded.iter().map(|u| u.speaker.as_str()).collect();
        assert_eq!(labels, ["alice", "spk0", "spk0", "spk1", "spk1"]);

        std::fs::write(tmp.path().join("zz_broken.wav"), b"not audio").unwrap();
        match load_corpus_dir(tmp.path()) {
            Err(Error::Corpus { path, .. }) => assert!(path.ends_with("zz_broken.wav")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_corpus_dir(tmp.path().join("nope")), Err(Error::MissingFile(_))));
    }
}
