//! 256-D speaker embeddings from log-mel spectrograms.
//!
//! Two embedders share one output type:
//! - [`mel_stats_embed`]: deterministic per-band statistics, exactly invariant to
//!   frame order.
//! - [`attention_encode`]: two self-attention layers (no positional encoding),
//!   attentive statistics pooling and a linear projection, trained with
//!   [`train_encoder`].

mod encoder;
mod mel_stats;
mod train;

use serde::{Deserialize, Serialize};

pub use encoder::{attention_encode, EncoderParams, ForwardCache, LayerParams};
pub use mel_stats::mel_stats_embed;
pub use train::{
    contrastive_loss, contrastive_loss_and_grads, train_encoder, TrainConfig, TrainOutcome,
    CONTRASTIVE_MARGIN,
};

use crate::audio_io::{resample, Waveform};
use crate::error::{Error, Result};
use crate::reversal::{apply_reversal, ReversalSpec};
use crate::spectral::Frontend;

pub const EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    pub values: Vec<f64>,
    pub source_id: String,
    /// True when computed from time-reversed audio.
    pub reversed: bool,
}

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>, source_id: impl Into<String>, reversed: bool) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite embedding entry at {i}"
            )));
        }
        Ok(SpeakerEmbedding {
            values,
            source_id: source_id.into(),
            reversed,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Same values with the reversed flag replaced.
    pub fn with_reversed(&self, reversed: bool) -> SpeakerEmbedding {
        SpeakerEmbedding {
            reversed,
            ..self.clone()
        }
    }
}

/// Which network turns a mel-spectrogram into an embedding.
#[derive(Debug, Clone)]
pub enum Embedder {
    MelStats,
    Attention(Box<EncoderParams>),
}

impl Embedder {
    pub fn embed_mel(
        &self,
        mel: &crate::spectral::MelSpectrogram,
    ) -> Result<SpeakerEmbedding> {
        match self {
            Embedder::MelStats => mel_stats_embed(mel),
            Embedder::Attention(p) => attention_encode(mel, p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Embedder::MelStats => "mel_stats",
            Embedder::Attention(_) => "attention",
        }
    }
}

/// Optional reversal, log-mel, then encoding. Input at another rate is first
/// resampled to the frontend rate.
pub fn utterance_embed(
    w: &Waveform,
    frontend: &Frontend,
    embedder: &Embedder,
    spec: Option<&ReversalSpec>,
) -> Result<SpeakerEmbedding> {
    w.validate()?;
    let conditioned;
    let w = if w.sample_rate != frontend.sample_rate {
        conditioned = resample(w, frontend.sample_rate)?;
        &conditioned
    } else {
        w
    };
    let transformed;
    let audio = match spec {
        Some(spec) => {
            transformed = apply_reversal(w, spec)?;
            &transformed
        }
        None => w,
    };
    let mel = frontend.mel(audio)?;
    let mut emb = embedder.embed_mel(&mel)?;
    emb.source_id = w.id.clone();
    emb.reversed = spec.is_some();
    Ok(emb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn vowel(n: usize) -> Waveform {
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / 16000.0;
                let env = (PI * i as f64 / n as f64).sin();
                env * (0.4 * (2.0 * PI * 140.0 * t).sin() + 0.2 * (2.0 * PI * 280.0 * t).sin()
                    + 0.1 * (2.0 * PI * 980.0 * t).sin())
            })
            .collect();
        Waveform::new(s, 16000, "vowel").unwrap()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn reversed_flag_follows_spec() {
        let fe = Frontend::default();
        let w = vowel(8000);
        let fwd = utterance_embed(&w, &fe, &Embedder::MelStats, None).unwrap();
        let rev = utterance_embed(&w, &fe, &Embedder::MelStats, Some(&ReversalSpec::Full)).unwrap();
        assert!(!fwd.reversed);
        assert!(rev.reversed);
        assert_eq!(fwd.dim(), EMBEDDING_DIM);
    }

    #[test]
    fn unit_window_reversal_is_identity() {
        let fe = Frontend::default();
        let w = vowel(6400);
        let unit = ReversalSpec::Windowed {
            window_ms: 1000.0 / 16000.0,
        };
        for embedder in [
            Embedder::MelStats,
            Embedder::Attention(Box::new(EncoderParams::init(16, 4, 3))),
        ] {
            let a = utterance_embed(&w, &fe, &embedder, None).unwrap();
            let b = utterance_embed(&w, &fe, &embedder, Some(&unit)).unwrap();
            assert_eq!(a.values, b.values);
        }
    }

    /// With N a multiple of the hop, the frames of the reversed signal are the
    /// time-reversed frames of the original, so both mel matrices hold the same
    /// multiset of rows (up to FFT rounding).
    #[test]
    fn full_reversal_mel_stats_cosine_is_one() {
        let fe = Frontend::default();
        let w = vowel(320 * 40);
        let m_fwd = fe.mel(&w).unwrap();
        let m_rev = fe.mel(&crate::reversal::reverse_full(&w)).unwrap();
        let t = m_fwd.n_frames();
        for i in 0..t {
            for b in 0..80 {
                assert!((m_fwd.values[[i, b]] - m_rev.values[[t - 1 - i, b]]).abs() < 1e-9);
            }
        }
        let a = utterance_embed(&w, &fe, &Embedder::MelStats, None).unwrap();
        let b = utterance_embed(&w, &fe, &Embedder::MelStats, Some(&ReversalSpec::Full)).unwrap();
        assert!((cosine(&a.values, &b.values) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn other_rates_are_resampled() {
        let fe = Frontend::default();
        let n = 24000;
        let s = (0..n)
            .map(|i| 0.3 * (2.0 * PI * 200.0 * i as f64 / 24000.0).sin())
            .collect();
        let w = Waveform::new(s, 24000, "r24").unwrap();
        let e = utterance_embed(&w, &fe, &Embedder::MelStats, None).unwrap();
        assert_eq!(e.dim(), EMBEDDING_DIM);
    }
}
