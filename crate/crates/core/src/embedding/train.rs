use std::collections::BTreeMap;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::EncoderParams;
use crate::audio_io::Utterance;
use crate::error::{Error, Result};
use crate::spectral::{Frontend, MelSpectrogram};

pub const CONTRASTIVE_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Seeds the dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            learning_rate: 3e-3,
            margin: CONTRASTIVE_MARGIN,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    /// Full-batch loss before each update.
    pub loss_trace: Vec<f64>,
}

fn cosine_parts(a: &Array1<f64>, b: &Array1<f64>) -> (f64, f64, f64) {
    let na = a.dot(a).sqrt().max(1e-12);
    let nb = b.dot(b).sqrt().max(1e-12);
    (a.dot(b) / (na * nb), na, nb)
}

/// Mean over all unordered pairs of `1 - cos` (same speaker) or
/// `max(0, cos - margin)` (different speakers).
pub fn contrastive_loss(embeddings: &[Array1<f64>], labels: &[usize], margin: f64) -> f64 {
    contrastive_loss_and_grads(embeddings, labels, margin).0
}

/// Loss plus dL/d(embedding_i) for every input.
pub fn contrastive_loss_and_grads(
    embeddings: &[Array1<f64>],
    labels: &[usize],
    margin: f64,
) -> (f64, Vec<Array1<f64>>) {
    let n = embeddings.len();
    let mut grads: Vec<Array1<f64>> = embeddings.iter().map(|e| Array1::zeros(e.len())).collect();
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs == 0 {
        return (0.0, grads);
    }
    let w = 1.0 / pairs as f64;
    let mut loss = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&embeddings[i], &embeddings[j]);
            let (cos, na, nb) = cosine_parts(a, b);
            let coeff = if labels[i] == labels[j] {
                loss += w * (1.0 - cos);
                -w
            } else if cos > margin {
                loss += w * (cos - margin);
                w
            } else {
                continue;
            };
            // d cos / d a = b / (|a||b|) - cos * a / |a|^2
            grads[i].scaled_add(coeff / (na * nb), b);
            grads[i].scaled_add(-coeff * cos / (na * na), a);
            grads[j].scaled_add(coeff / (na * nb), a);
            grads[j].scaled_add(-coeff * cos / (nb * nb), b);
        }
    }
    (loss, grads)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t);
        let bias2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bias1) / ((*v / bias2).sqrt() + 1e-8);
        }
    }
}

fn speaker_indices(corpus: &[Utterance]) -> Result<Vec<usize>> {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for u in corpus {
        *counts.entry(&u.speaker).or_default() += 1;
        let next = ids.len();
        ids.entry(&u.speaker).or_insert(next);
    }
    if counts.len() < 2 {
        return Err(Error::DegenerateCorpus(format!(
            "need at least 2 speakers, found {}",
            counts.len()
        )));
    }
    if let Some((spk, c)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(Error::DegenerateCorpus(format!(
            "speaker {spk} has {c} utterance(s), need at least 2"
        )));
    }
    Ok(corpus.iter().map(|u| ids[u.speaker.as_str()]).collect())
}

/// Full-batch Adam on the pairwise cosine-margin contrastive objective.
///
/// Per-utterance forward/backward passes may run in parallel; gradients are
/// summed in corpus order, so results do not depend on the thread count.
pub fn train_encoder(
    corpus: &[Utterance],
    frontend: &Frontend,
    params: &EncoderParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    params.validate()?;
    let labels = speaker_indices(corpus)?;
    let mels: Vec<MelSpectrogram> = corpus
        .par_iter()
        .map(|u| {
            frontend.mel(&u.wave).map_err(|e| Error::Corpus {
                path: u.wave.id.clone().into(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut params = params.clone();
    let mut flat = params.to_flat();
    let n_params = flat.len();
    let mut adam = Adam::new(n_params, cfg);
    let mut loss_trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let passes = mels
            .par_iter()
            .enumerate()
            .map(|(i, mel)| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((step as u64) << 32) | i as u64);
                params.forward(mel, Some(&mut rng))
            })
            .collect::<Result<Vec<_>>>()?;
        let outputs: Vec<Array1<f64>> = passes.iter().map(|(o, _)| o.clone()).collect();
        let (loss, g_out) = contrastive_loss_and_grads(&outputs, &labels, cfg.margin);
        loss_trace.push(loss);

        let partials: Vec<Vec<f64>> = passes
            .par_iter()
            .zip(&g_out)
            .map(|((_, cache), g)| {
                let mut grads = params.zeros_like();
                params.backward(cache, g.view(), &mut grads);
                grads.to_flat()
            })
            .collect();
        let mut grads = vec![0.0; n_params];
        for partial in &partials {
            grads.iter_mut().zip(partial).for_each(|(a, b)| *a += b);
        }
        adam.step(&mut flat, &grads);
        params.set_flat(&flat);
    }
    Ok(TrainOutcome { params, loss_trace })
}
