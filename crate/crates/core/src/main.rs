use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rewind::audio_io::{read_wav, write_wav};
use rewind::embedding::{train_encoder, utterance_embed, EncoderParams, TrainConfig};
use rewind::error::{Error, Result};
use rewind::harness::{
    emit_report, load_corpus, run_fusion_ablation, run_reversal_sweep, synth_corpus, write_corpus,
    EmbedderSpec, EvaluationReport, RunConfig,
};
use rewind::reversal::{apply_reversal, ReversalSpec};
use rewind::spectral::Frontend;

/// Speech time reversal experiments.
#[derive(Parser)]
#[command(name = "rewind", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Attention-encoder checkpoint instead of the mel-statistics embedder.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Score every reversal strategy against the unreversed embeddings.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated strategies, e.g. `20ms,100ms,full`.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<ReversalSpec>>,
    },
    /// Score fused embeddings over a grid of weights.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated `alpha:beta` points, e.g. `1:0,0.5:0.5`.
        #[arg(long, value_delimiter = ',', value_parser = parse_point)]
        grid: Option<Vec<(f64, f64)>>,
    },
    /// Print the embedding of one WAV file as JSON.
    Embed {
        input: PathBuf,
        /// Reverse the audio first with this strategy.
        #[arg(long)]
        reverse: Option<ReversalSpec>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reverse one WAV file.
    Reverse {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "full")]
        strategy: ReversalSpec,
    },
    /// Write the synthetic corpus as WAV files.
    Synth {
        #[arg(long, default_value_t = 6)]
        speakers: usize,
        #[arg(long, default_value_t = 4)]
        utterances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the attention encoder on the configured corpus and save a checkpoint.
    TrainEncoder {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        #[arg(long, default_value_t = 64)]
        d_model: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_point(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected alpha:beta, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    if let Some(checkpoint) = &args.checkpoint {
        cfg.embedder = EmbedderSpec::Attention {
            checkpoint: checkpoint.clone(),
        };
    }
    Ok(cfg)
}

fn finish(report: &EvaluationReport, cfg: &RunConfig) -> Result<()> {
    let (json, csv) = emit_report(report, &cfg.output_dir)?;
    print!("{}", report.to_csv());
    eprintln!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { run, strategies } => {
            let mut cfg = run_config(&run)?;
            if let Some(s) = strategies {
                cfg.strategies = s;
            }
            cfg.validate()?;
            finish(&run_reversal_sweep(&cfg)?, &cfg)
        }
        Command::Ablate { run, grid } => {
            let mut cfg = run_config(&run)?;
            if let Some(g) = grid {
                cfg.grid = g;
            }
            cfg.validate()?;
            finish(&run_fusion_ablation(&cfg)?, &cfg)
        }
        Command::Embed {
            input,
            reverse,
            checkpoint,
            out,
        } => {
            let embedder = match checkpoint {
                Some(c) => EmbedderSpec::Attention { checkpoint: c },
                None => EmbedderSpec::MelStats,
            }
            .build()?;
            let w = read_wav(&input)?;
            let e = utterance_embed(&w, &Frontend::default(), &embedder, reverse.as_ref())?;
            let json = serde_json::to_string(&e)?;
            match out {
                Some(path) => std::fs::write(path, json + "\n")?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Reverse {
            input,
            output,
            strategy,
        } => {
            let w = read_wav(&input)?;
            write_wav(&apply_reversal(&w, &strategy)?, output)
        }
        Command::Synth {
            speakers,
            utterances,
            seed,
            out,
        } => {
            let corpus = synth_corpus(speakers, utterances, seed)?;
            let paths = write_corpus(&corpus, &out)?;
            eprintln!("wrote {} files to {}", paths.len(), out.display());
            Ok(())
        }
        Command::TrainEncoder {
            config,
            seed,
            threads,
            steps,
            lr,
            d_model,
            heads,
            out,
        } => {
            let cfg = run_config(&RunArgs {
                config,
                out: None,
                seed,
                threads,
                checkpoint: None,
            })?;
            cfg.validate()?;
            let corpus = load_corpus(&cfg.corpus, cfg.seed)?;
            let frontend = cfg.frontend()?;
            let init = EncoderParams::init(d_model, heads, cfg.seed);
            let train_cfg = TrainConfig {
                steps,
                learning_rate: lr,
                seed: cfg.seed,
                ..TrainConfig::default()
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            let outcome = pool.install(|| train_encoder(&corpus, &frontend, &init, &train_cfg))?;
            outcome.params.save(&out)?;
            if let (Some(first), Some(last)) = (outcome.loss_trace.first(), outcome.loss_trace.last()) {
                eprintln!("loss {first:.4} -> {last:.4} over {steps} steps");
            }
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
