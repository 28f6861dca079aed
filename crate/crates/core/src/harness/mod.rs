//! Configuration, corpora and the two experiments: the reversal-strategy sweep
//! and the fusion-weight ablation.

mod config;
mod corpus;
mod experiments;
mod report;

pub use config::{CorpusSpec, EmbedderSpec, Pairing, RunConfig, CONFIG_VERSION};
pub use corpus::{load_corpus, load_corpus_dir, synth_corpus, synth_utterance, write_corpus};
pub use experiments::{run_fusion_ablation, run_reversal_sweep};
pub use report::{emit_report, EvaluationReport, FusionScore, ReportKind, ReportMetadata, StrategyScore};
