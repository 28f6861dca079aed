use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::reversal::ReversalSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Sweep,
    Ablation,
}

impl ReportKind {
    fn stem(self) -> &'static str {
        match self {
            ReportKind::Sweep => "sweep",
            ReportKind::Ablation => "ablation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub embedder: String,
    pub n_speakers: usize,
    pub n_utterances: usize,
    /// Seconds since the Unix epoch. Only in the JSON report.
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyScore {
    pub strategy: ReversalSpec,
    pub label: String,
    pub ss: f64,
    /// Mean F0-contour correlation between transformed and reference audio,
    /// over utterances with enough jointly voiced frames.
    pub pitch_correlation: Option<f64>,
    pub pitch_utterances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionScore {
    pub alpha: f64,
    pub beta: f64,
    pub ss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub kind: ReportKind,
    pub metadata: ReportMetadata,
    pub strategies: Vec<StrategyScore>,
    pub fusion: Vec<FusionScore>,
    /// Score of the unfused forward embeddings under the ablation pairing.
    pub baseline: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl EvaluationReport {
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One row per strategy, fusion point and baseline. Contains no timestamps.
    pub fn to_csv(&self) -> String {
        let m = &self.metadata;
        let mut out = String::from("kind,label,alpha,beta,ss,pitch_correlation,config_hash,seed\n");
        for s in &self.strategies {
            let _ = writeln!(
                out,
                "strategy,{},,,{},{},{},{}",
                s.label,
                s.ss,
                opt(s.pitch_correlation),
                m.config_hash,
                m.seed
            );
        }
        if let Some(b) = self.baseline {
            let _ = writeln!(out, "baseline,unfused,,,{b},,{},{}", m.config_hash, m.seed);
        }
        for f in &self.fusion {
            let _ = writeln!(
                out,
                "fusion,a{}_b{},{},{},{},,{},{}",
                f.alpha, f.beta, f.alpha, f.beta, f.ss, m.config_hash, m.seed
            );
        }
        out
    }
}

/// Writes `<kind>.json` and `<kind>.csv` into `dir` and returns both paths.
pub fn emit_report(r: &EvaluationReport, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let json = dir.join(format!("{}.json", r.kind.stem()));
    let csv = dir.join(format!("{}.csv", r.kind.stem()));
    std::fs::write(&json, serde_json::to_string_pretty(r)? + "\n")?;
    std::fs::write(&csv, r.to_csv())?;
    Ok((json, csv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvaluationReport {
        EvaluationReport {
            kind: ReportKind::Sweep,
            metadata: ReportMetadata {
                tool_version: "0".into(),
                config_hash: "abc".into(),
                seed: 7,
                embedder: "mel_stats".into(),
                n_speakers: 1,
                n_utterances: 1,
                created_unix: 5,
            },
            strategies: ReversalSpec::table_strategies()
                .into_iter()
                .enumerate()
                .map(|(i, s)| StrategyScore {
                    strategy: s,
                    label: s.label(),
                    ss: 0.1 * i as f64 + 1.0 / 3.0,
                    pitch_correlation: (i % 2 == 0).then_some(-0.25),
                    pitch_utterances: i,
                })
                .collect(),
            fusion: vec![],
            baseline: None,
        }
    }

    #[test]
    fn csv_rows_and_json_round_trip() {
        let r = report();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 8);
        assert!(csv.lines().nth(7).unwrap().starts_with("strategy,full,"));

        let tmp = tempfile::tempdir().unwrap();
        let (json, csv_path) = emit_report(&r, tmp.path().join("nested")).unwrap();
        assert_eq!(EvaluationReport::read_json(&json).unwrap(), r);
        assert_eq!(std::fs::read_to_string(csv_path).unwrap(), csv);

        let later = EvaluationReport {
            metadata: ReportMetadata {
                created_unix: 99,
                ..r.metadata.clone()
            },
            ..r.clone()
        };
        assert_eq!(later.to_csv(), csv);
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("plain");
        std::fs::write(&file, "x").unwrap();
        assert!(emit_report(&report(), file.join("sub")).is_err());
    }
}
