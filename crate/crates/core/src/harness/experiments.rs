use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use super::config::{Pairing, RunConfig};
use super::corpus::load_corpus;
use super::report::{EvaluationReport, FusionScore, ReportKind, ReportMetadata, StrategyScore};
use crate::audio_io::Utterance;
use crate::embedding::{utterance_embed, Embedder, SpeakerEmbedding};
use crate::error::{Error, Result};
use crate::fusion::fuse_weighted;
use crate::metrics::speaker_similarity_score;
use crate::pitch::{contour_correlation, estimate_f0_with, PitchConfig, PitchContour};
use crate::reversal::{apply_reversal, ReversalSpec};
use crate::spectral::Frontend;

struct Prepared {
    corpus: Vec<Utterance>,
    frontend: Frontend,
    embedder: Embedder,
    forward: Vec<SpeakerEmbedding>,
}

fn with_context<T>(u: &Utterance, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Corpus {
        path: u.wave.id.clone().into(),
        source: Box::new(e),
    })
}

fn embed_all(p: &Prepared, spec: Option<&ReversalSpec>) -> Result<Vec<SpeakerEmbedding>> {
    p.corpus
        .par_iter()
        .map(|u| with_context(u, utterance_embed(&u.wave, &p.frontend, &p.embedder, spec)))
        .collect()
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.corpus, cfg.seed)?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus is empty"));
    }
    let mut p = Prepared {
        corpus,
        frontend: cfg.frontend()?,
        embedder: cfg.embedder.build()?,
        forward: Vec::new(),
    };
    p.forward = embed_all(&p, None)?;
    Ok(p)
}

/// Reference embeddings and `(generated, reference)` pairs for a pairing policy.
fn references(p: &Prepared, pairing: Pairing) -> Result<(Vec<SpeakerEmbedding>, Vec<(usize, usize)>)> {
    match pairing {
        Pairing::SameUtterance => Ok((p.forward.clone(), (0..p.forward.len()).map(|i| (i, i)).collect())),
        Pairing::SpeakerCentroid => {
            let mut index: BTreeMap<&str, usize> = BTreeMap::new();
            for u in &p.corpus {
                let next = index.len();
                index.entry(u.speaker.as_str()).or_insert(next);
            }
            let dim = p.forward[0].dim();
            let mut sums = vec![(vec![0.0; dim], 0usize); index.len()];
            for (u, e) in p.corpus.iter().zip(&p.forward) {
                let (sum, count) = &mut sums[index[u.speaker.as_str()]];
                sum.iter_mut().zip(&e.values).for_each(|(s, v)| *s += v);
                *count += 1;
            }
            let mut centroids = vec![None; index.len()];
            for (speaker, &i) in &index {
                let (sum, count) = &sums[i];
                let mean = sum.iter().map(|s| s / *count as f64).collect();
                centroids[i] = Some(SpeakerEmbedding::new(mean, *speaker, false)?);
            }
            let pairs = p
                .corpus
                .iter()
                .enumerate()
                .map(|(i, u)| (i, index[u.speaker.as_str()]))
                .collect();
            Ok((centroids.into_iter().map(Option::unwrap).collect(), pairs))
        }
    }
}

fn metadata(cfg: &RunConfig, p: &Prepared) -> ReportMetadata {
    let mut speakers: Vec<&str> = p.corpus.iter().map(|u| u.speaker.as_str()).collect();
    speakers.sort_unstable();
    speakers.dedup();
    ReportMetadata {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        embedder: p.embedder.name().to_string(),
        n_speakers: speakers.len(),
        n_utterances: p.corpus.len(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

/// Contour of the transformed audio against the original contour, frame-reversed
/// for full reversal. `None` when the pair has too few jointly voiced frames.
fn pitch_proxy(u: &Utterance, original: &PitchContour, spec: &ReversalSpec) -> Result<Option<f64>> {
    let transformed = apply_reversal(&u.wave, spec)?;
    let contour = estimate_f0_with(&transformed, &PitchConfig::default())?;
    let reference = match spec {
        ReversalSpec::Full => original.frame_reversed(),
        ReversalSpec::Windowed { .. } => original.clone(),
    };
    match contour_correlation(&contour, &reference) {
        Ok(r) if r.is_finite() => Ok(Some(r)),
        Ok(_) | Err(Error::TooFewVoicedFrames(_) | Error::InvalidParameter(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// For each strategy: mean similarity of reversed-audio embeddings to their
/// references, plus a pitch-contour correlation proxy.
pub fn run_reversal_sweep(cfg: &RunConfig) -> Result<EvaluationReport> {
    cfg.thread_pool()?.install(|| {
        let p = prepare(cfg)?;
        let (refs, pairs) = references(&p, cfg.sweep_pairing)?;
        let contours: Vec<PitchContour> = p
            .corpus
            .par_iter()
            .map(|u| with_context(u, estimate_f0_with(&u.wave, &PitchConfig::default())))
            .collect::<Result<_>>()?;

        let mut strategies = Vec::with_capacity(cfg.strategies.len());
        for spec in &cfg.strategies {
            let reversed = embed_all(&p, Some(spec))?;
            let ss = speaker_similarity_score(&reversed, &refs, &pairs)?;
            let proxies: Vec<Option<f64>> = p
                .corpus
                .par_iter()
                .zip(&contours)
                .map(|(u, c)| with_context(u, pitch_proxy(u, c, spec)))
                .collect::<Result<_>>()?;
            let voiced: Vec<f64> = proxies.into_iter().flatten().collect();
            strategies.push(StrategyScore {
                strategy: *spec,
                label: spec.label(),
                ss,
                pitch_correlation: (!voiced.is_empty())
                    .then(|| voiced.iter().sum::<f64>() / voiced.len() as f64),
                pitch_utterances: voiced.len(),
            });
        }
        Ok(EvaluationReport {
            kind: ReportKind::Sweep,
            metadata: metadata(cfg, &p),
            strategies,
            fusion: Vec::new(),
            baseline: None,
        })
    })
}

/// For each (alpha, beta): fuse forward and reversed embeddings per utterance and
/// score against the references. The unfused forward score is the baseline.
pub fn run_fusion_ablation(cfg: &RunConfig) -> Result<EvaluationReport> {
    cfg.thread_pool()?.install(|| {
        let p = prepare(cfg)?;
        let (refs, pairs) = references(&p, cfg.ablation_pairing)?;
        let reversed = embed_all(&p, Some(&cfg.ablation_reversal))?;
        let baseline = speaker_similarity_score(&p.forward, &refs, &pairs)?;
        let fusion = cfg
            .grid
            .iter()
            .map(|&(alpha, beta)| {
                let fused = p
                    .forward
                    .iter()
                    .zip(&reversed)
                    .map(|(s, r)| fuse_weighted(s, r, alpha, beta))
                    .collect::<Result<Vec<_>>>()?;
                let ss = speaker_similarity_score(&fused, &refs, &pairs)?;
                Ok(FusionScore { alpha, beta, ss })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvaluationReport {
            kind: ReportKind::Ablation,
            metadata: metadata(cfg, &p),
            strategies: Vec::new(),
            fusion,
            baseline: Some(baseline),
        })
    })
}
