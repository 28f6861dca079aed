use ndarray::ArrayView1;

use super::{SpeakerEmbedding, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::spectral::{MelSpectrogram, N_MELS};

/// Bands pooled into one sub-band for the quantile features.
const BANDS_PER_GROUP: usize = 5;
const QUANTILES: [f64; 6] = [0.1, 0.25, 0.4, 0.6, 0.75, 0.9];

/// Linear-interpolated quantile of an ascending slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted(col: ArrayView1<'_, f64>) -> Vec<f64> {
    let mut v = col.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Per-band mean (80) ⊕ per-band population std (80) ⊕ sub-band quantiles
/// (16 groups × 6 levels) = 256 values.
///
/// Every statistic is accumulated over values sorted within the band, so the
/// result is bit-identical under any permutation of frames.
pub fn mel_stats_embed(m: &MelSpectrogram) -> Result<SpeakerEmbedding> {
    let t = m.n_frames();
    if t == 0 {
        return Err(Error::EmptyInput("mel-spectrogram has no frames"));
    }
    if m.n_bands() != N_MELS {
        return Err(Error::dims(format!("{N_MELS} mel bands"), m.n_bands()));
    }
    let mut means = Vec::with_capacity(N_MELS);
    let mut stds = Vec::with_capacity(N_MELS);
    for col in m.values.columns() {
        let v = sorted(col);
        if v[0] == v[t - 1] {
            means.push(v[0]);
            stds.push(0.0);
            continue;
        }
        let mean = v.iter().sum::<f64>() / t as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t as f64;
        means.push(mean);
        stds.push(var.sqrt());
    }

    let groups = N_MELS / BANDS_PER_GROUP;
    let mut quantiles = Vec::with_capacity(groups * QUANTILES.len());
    for g in 0..groups {
        let mut energies: Vec<f64> = m
            .values
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .skip(g * BANDS_PER_GROUP)
                    .take(BANDS_PER_GROUP)
                    .sum::<f64>()
                    / BANDS_PER_GROUP as f64
            })
            .collect();
        energies.sort_by(f64::total_cmp);
        quantiles.extend(QUANTILES.iter().map(|&p| quantile(&energies, p)));
    }

    let mut values = means;
    values.extend(stds);
    values.extend(quantiles);
    debug_assert_eq!(values.len(), EMBEDDING_DIM);
    SpeakerEmbedding::new(values, "", false)
}
