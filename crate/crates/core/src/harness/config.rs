use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{EncoderParams, Embedder};
use crate::error::{Error, Result};
use crate::fusion::default_grid;
use crate::reversal::ReversalSpec;
use crate::spectral::{Frontend, StftConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusSpec {
    Synthetic { speakers: usize, utterances: usize },
    /// WAV files labelled by subdirectory, or by the file-name prefix before `_`.
    Directory { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    MelStats,
    Attention { checkpoint: PathBuf },
}

impl EmbedderSpec {
    pub fn build(&self) -> Result<Embedder> {
        Ok(match self {
            EmbedderSpec::MelStats => Embedder::MelStats,
            EmbedderSpec::Attention { checkpoint } => {
                Embedder::Attention(Box::new(EncoderParams::load(checkpoint)?))
            }
        })
    }
}

/// What a transformed utterance is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// The unreversed embedding of the same file.
    SameUtterance,
    /// The mean unreversed embedding of the utterance's speaker.
    SpeakerCentroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub corpus: CorpusSpec,
    pub stft: StftConfig,
    pub strategies: Vec<ReversalSpec>,
    /// (alpha, beta) points for the ablation.
    pub grid: Vec<(f64, f64)>,
    /// Reversal used to build the reversed embedding in the ablation.
    pub ablation_reversal: ReversalSpec,
    pub embedder: EmbedderSpec,
    pub sweep_pairing: Pairing,
    pub ablation_pairing: Pairing,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses all cores. Does not affect results.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            corpus: CorpusSpec::Synthetic {
                speakers: 6,
                utterances: 4,
            },
            stft: StftConfig::default(),
            strategies: ReversalSpec::table_strategies(),
            grid: default_grid(),
            ablation_reversal: ReversalSpec::Full,
            embedder: EmbedderSpec::MelStats,
            sweep_pairing: Pairing::SameUtterance,
            ablation_pairing: Pairing::SpeakerCentroid,
            output_dir: PathBuf::from("out"),
            seed: 7,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategy list is empty".into()));
        }
        for s in self.strategies.iter().chain([&self.ablation_reversal]) {
            s.validate()?;
        }
        if self.grid.is_empty() {
            return Err(Error::Config("fusion grid is empty".into()));
        }
        if let Some(p) = self
            .grid
            .iter()
            .find(|(a, b)| !(0.0..=1.0).contains(a) || !(0.0..=1.0).contains(b))
        {
            return Err(Error::Config(format!("grid point {p:?} outside [0, 1]^2")));
        }
        if let CorpusSpec::Synthetic { speakers, utterances } = self.corpus {
            if speakers < 1 || utterances < 1 {
                return Err(Error::Config("synthetic corpus needs at least 1 speaker and 1 utterance".into()));
            }
        }
        self.stft.validate()
    }

    pub fn frontend(&self) -> Result<Frontend> {
        Frontend::with_stft(self.stft)
    }

    /// SHA-256 over the canonical JSON of every field that can change results
    /// (everything except the output directory and thread count), first 16 hex digits.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.threads = 0;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    pub(crate) fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}
