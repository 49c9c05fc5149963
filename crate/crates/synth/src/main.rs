use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Regenerates the shipped lexicon and synthetic corpora.
#[derive(Parser)]
#[command(name = "tooldesk-synth", version)]
struct Args {
    /// Output directory.
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match tooldesk_synth::write_all(&args.out_dir) {
        Ok(()) => {
            println!("wrote corpora to {}", args.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
