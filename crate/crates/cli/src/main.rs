//! `newsxlt`: corpus building, sampling, embedding validation and
//! cross-lingual evaluation from one binary.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use newsxlt::sampler::Mode;
use newsxlt::scoring::ColdPolicy;

use crate::config::parse_assignment;

#[derive(Debug, Parser)]
#[command(
    name = "newsxlt",
    version,
    about = "Multilingual news corpus and cross-lingual recommendation toolkit"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Compute and report, but write no output files.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean a news JSONL corpus (dedup, script/LID/length filters, near dedup).
    BuildCorpus(BuildCorpusArgs),
    /// Per-language counts and length statistics of a corpus.
    CorpusStats(CorpusStatsArgs),
    /// Sample seq2seq training examples (DAE and/or MT).
    SampleExport(SampleExportArgs),
    /// Check that embedding tables cover every news id in a behaviors file.
    ValidateEmbeddings(ValidateArgs),
    /// Zero-shot cross-lingual evaluation of per-language embedding tables.
    Evaluate(EvaluateArgs),
    /// Pick the checkpoint with the best mean nDCG@10.
    SelectCheckpoint(SelectArgs),
    /// Subsample impressions for few-shot training.
    FewshotExport(FewshotArgs),
}

#[derive(Debug, Args)]
struct BuildCorpusArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Stats JSON path (default: `<output>.stats.json`; stdout on dry runs).
    #[arg(long)]
    stats: Option<PathBuf>,
    /// TSV of `id<TAB>iso639-3` language-ID labels.
    #[arg(long)]
    lid_labels: Option<PathBuf>,
    /// Treat the input as a parallel corpus (source-side dedup only).
    #[arg(long)]
    parallel: bool,
    /// Per-source shortest-K% removal, as SOURCE=K.
    #[arg(long = "k", value_name = "SOURCE=K", value_parser = parse_assignment)]
    k_percent: Vec<(String, String)>,
    #[arg(long)]
    default_k: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    shingle_n: Option<usize>,
    #[arg(long)]
    min_letters: Option<usize>,
    /// Accepted provenance tags (comma separated).
    #[arg(long, value_delimiter = ',')]
    sources: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct CorpusStatsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
    /// Write JSON here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleExportArgs {
    /// Monolingual news JSONL.
    #[arg(long)]
    mono: Option<PathBuf>,
    /// Parallel JSONL.
    #[arg(long)]
    parallel: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    phase_split: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct EmbeddingArgs {
    #[arg(long)]
    behaviors: Option<PathBuf>,
    /// Embedding table per language, as LANG=PATH.
    #[arg(long = "embeddings", value_name = "LANG=PATH", value_parser = parse_assignment)]
    embeddings: Vec<(String, String)>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    inputs: EmbeddingArgs,
}

#[derive(Debug, Args)]
struct ScoringArgs {
    #[arg(long)]
    source_language: Option<String>,
    #[arg(long)]
    max_history: Option<usize>,
    #[arg(long)]
    cold_policy: Option<ColdPolicy>,
    /// Normalize embeddings to unit length (cosine scoring).
    #[arg(long)]
    l2_normalize: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    inputs: EmbeddingArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Restrict targets to these tags (comma separated).
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
    #[arg(long)]
    report_json: Option<PathBuf>,
    #[arg(long)]
    report_csv: Option<PathBuf>,
    /// Evaluate only the latest day of behaviors.
    #[arg(long)]
    validation_day: bool,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    behaviors: Option<PathBuf>,
    /// Checkpoint directory holding one table per language; repeat in order.
    #[arg(long = "checkpoint", value_name = "DIR")]
    checkpoints: Vec<PathBuf>,
    /// Languages to load from each checkpoint (comma separated).
    #[arg(long, value_delimiter = ',')]
    languages: Option<Vec<String>>,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Write the selection as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FewshotArgs {
    #[arg(long)]
    behaviors: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    /// Subsampled behaviors TSV.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write per-positive training tuples (JSONL).
    #[arg(long)]
    samples_output: Option<PathBuf>,
    /// Negatives per positive in the training tuples.
    #[arg(long)]
    negatives: Option<usize>,
    /// Sample from all days but the latest.
    #[arg(long)]
    train_split: bool,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("NEWSXLT_LOG", "warn");
    env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
