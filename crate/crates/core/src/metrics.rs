//! Speaker-similarity scoring and the source/filter reconstruction residual.

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{SpeakerEmbedding, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::pitch::{normalize_f0, PitchContour};
use crate::spectral::{MelSpectrogram, N_MELS};

/// Cosine of the angle between two vectors, clamped to [-1, 1].
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64> {
    cosine_slices(&a.values, &b.values)
}

/// Mean cosine over `(generated index, reference index)` pairs, summed in pair order.
pub fn speaker_similarity_score(
    generated: &[SpeakerEmbedding],
    reference: &[SpeakerEmbedding],
    pairs: &[(usize, usize)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairing);
    }
    let mut total = 0.0;
    for &(g, r) in pairs {
        let (a, b) = match (generated.get(g), reference.get(r)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "pair ({g}, {r}) out of range for {} x {} embeddings",
                    generated.len(),
                    reference.len()
                )))
            }
        };
        total += cosine_similarity(a, b)?;
    }
    Ok(total / pairs.len() as f64)
}

/// `(i, i)` for every index.
pub fn identity_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, i)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceFilterPair {
    pub z_src: Array2<f64>,
    pub z_ftr: Array2<f64>,
}

impl SourceFilterPair {
    pub fn new(z_src: Array2<f64>, z_ftr: Array2<f64>) -> Result<Self> {
        if z_src.dim() != z_ftr.dim() {
            return Err(Error::dims(format!("{:?}", z_src.dim()), format!("{:?}", z_ftr.dim())));
        }
        if z_src.iter().chain(z_ftr.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite latent entry".into()));
        }
        Ok(SourceFilterPair { z_src, z_ftr })
    }
}

/// Mean absolute error between `x_mel` and `z_src + z_ftr`.
pub fn reconstruction_l1(x_mel: &MelSpectrogram, pair: &SourceFilterPair) -> Result<f64> {
    let x = &x_mel.values;
    if x.dim() != pair.z_src.dim() || x.dim() != pair.z_ftr.dim() {
        return Err(Error::dims(format!("{:?}", x.dim()), format!("{:?}", pair.z_src.dim())));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("empty mel-spectrogram"));
    }
    let sum: f64 = x
        .iter()
        .zip(pair.z_src.iter().zip(pair.z_ftr.iter()))
        .map(|(x, (s, f))| (x - (s + f)).abs())
        .sum();
    Ok(sum / x.len() as f64)
}

/// Fixed random linear stand-ins for the source and filter encoders. No biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoders {
    /// 80 x 256, applied to the embedding.
    pub src_a: Array2<f64>,
    /// 80 x 256, applied to the embedding scaled by the frame's normalized F0.
    pub src_b: Array2<f64>,
    /// 80 x 80, applied to the content frame.
    pub ftr_c: Array2<f64>,
    /// 80 x 256, applied to the fused embedding.
    pub ftr_d: Array2<f64>,
}

impl ToyEncoders {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_simple_fn((N_MELS, cols), || rng.gen_range(-bound..bound))
        };
        ToyEncoders {
            src_a: mat(EMBEDDING_DIM),
            src_b: mat(EMBEDDING_DIM),
            ftr_c: mat(N_MELS),
            ftr_d: mat(EMBEDDING_DIM),
        }
    }

    /// Row `t` is `A s + f_t B s`, with `f_t` the normalized log-F0 of the
    /// nearest contour frame (0 when unvoiced).
    pub fn source_encode(&self, p: &PitchContour, s: &SpeakerEmbedding, frames: usize) -> Result<Array2<f64>> {
        check_embedding(s)?;
        if frames == 0 || p.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "cannot map a {}-frame contour onto {frames} frames",
                p.len()
            )));
        }
        let f = match normalize_f0(p) {
            Ok(f) => f,
            Err(Error::NoVoicedFrames) => vec![0.0; p.len()],
            Err(e) => return Err(e),
        };
        let sv = ArrayView1::from(&s.values);
        let a = self.src_a.dot(&sv);
        let b = self.src_b.dot(&sv);
        let mut out = Array2::zeros((frames, N_MELS));
        for (t, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let ft = f[t * p.len() / frames];
            row.assign(&(&a + &(&b * ft)));
        }
        Ok(out)
    }

    /// Row `t` is `C x_t + D s_cmb`.
    pub fn filter_encode(&self, content: &MelSpectrogram, s_cmb: &SpeakerEmbedding) -> Result<Array2<f64>> {
        check_embedding(s_cmb)?;
        if content.n_bands() != N_MELS {
            return Err(Error::dims(format!("{N_MELS} mel bands"), content.n_bands()));
        }
        let d = self.ftr_d.dot(&ArrayView1::from(&s_cmb.values));
        let mut out = content.values.dot(&self.ftr_c.t());
        out += &d;
        Ok(out)
    }
}

fn check_embedding(s: &SpeakerEmbedding) -> Result<()> {
    if s.dim() != EMBEDDING_DIM {
        return Err(Error::dims(EMBEDDING_DIM, s.dim()));
    }
    Ok(())
}

pub fn toy_source_encode(
    enc: &ToyEncoders,
    p: &PitchContour,
    s: &SpeakerEmbedding,
    frames: usize,
) -> Result<Array2<f64>> {
    enc.source_encode(p, s, frames)
}

pub fn toy_filter_encode(
    enc: &ToyEncoders,
    content: &MelSpectrogram,
    s_cmb: &SpeakerEmbedding,
) -> Result<Array2<f64>> {
    enc.filter_encode(content, s_cmb)
}
