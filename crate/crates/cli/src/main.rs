use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

/// Encoder/rewriter co-training experiments for dense tool retrieval.
#[derive(Parser, Debug)]
#[command(name = "tooldesk", version)]
pub struct Cli {
    /// Overrides the seed from the run file (or the command's default seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run file with `[data]` and `[pipeline]` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; each command has its own default.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a corpus and store a canonical copy with its summary.
    Ingest {
        /// JSONL corpus; defaults to the run file's corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Run the full co-training pipeline described by --config.
    Run {
        /// Overrides the number of rounds.
        #[arg(long)]
        rounds: Option<usize>,
        /// Enables an ablation switch; repeatable.
        #[arg(long, value_enum)]
        ablation: Vec<AblationFlag>,
    },
    /// Evaluate an encoder checkpoint, alone and optionally with a rewriter.
    Eval {
        #[arg(long)]
        encoder: PathBuf,
        /// Built-in rewriter checkpoint.
        #[arg(long, conflicts_with = "remote_endpoint")]
        policy: Option<PathBuf>,
        /// Chat-completions URL of an external rewriter. The bearer token is
        /// read from TOOLDESK_API_KEY.
        #[arg(long)]
        remote_endpoint: Option<String>,
        #[arg(long, requires = "remote_endpoint", default_value = "default")]
        remote_model: String,
        /// JSONL corpus; defaults to the run file's corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Comma-separated cutoffs.
        #[arg(long, value_delimiter = ',', default_values_t = tooldesk_core::eval::DEFAULT_KS)]
        ks: Vec<usize>,
        /// Also write the metric-by-tier k-sweep table.
        #[arg(long)]
        k_sweep: bool,
    },
    /// Paired bootstrap confidence interval between two per-query score files.
    Ci {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = tooldesk_core::eval::DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value = "ndcg")]
        metric: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Restricts both files to one split (eval_standard or eval_vague).
        #[arg(long)]
        split: Option<String>,
    },
    /// Summarize one or more run directories.
    Report {
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationFlag {
    SkipS1b,
    FreezeEncoder,
    FreezeRewriter,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
