use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sdecade::{run, Command, ExperimentConfig};

/// Run a cascade neural SDE experiment.
///
/// Exit status: 0 when the command's check passes, 1 when it fails,
/// 2 for configuration or IO errors.
#[derive(Debug, Parser)]
#[command(name = "sdecade", version)]
struct Args {
    command: Command,
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sampling.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = ExperimentConfig::load(&args.config).and_then(|mut cfg| {
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        run(args.command, &cfg, &out)
    });
    match result {
        Ok(outcome) => {
            println!("{}: {}", if outcome.passed { "PASS" } else { "FAIL" }, outcome.summary);
            for f in &outcome.files {
                println!("  wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
