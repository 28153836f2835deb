use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use winconv::commands::{
    cmd_bound, cmd_extract, cmd_mid_eval, cmd_mid_train, cmd_rasterize, CommandError,
};
use winconv::RunConfig;

#[derive(Parser)]
#[command(
    name = "winconv",
    about = "Windowed convolutional training, bound verification, and relay-placement evaluation"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Root seed; overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (fallback: the WINDOWED_CONV_THREADS env var).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train 1D models across seeds and verify the generalization bound.
    Bound,
    /// Train the 2D relay-placement model against the heuristic oracle.
    MidTrain {
        /// Continue from the checkpoint and loss curve in the output dir.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint zero-shot across window widths.
    MidEval {
        /// Model checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write input/output PGM pairs for the first trials.
        #[arg(long)]
        render: bool,
    },
    /// Rasterize a positions CSV into a PGM image.
    Rasterize,
    /// Extract positions from a PGM image into a CSV.
    Extract,
}

fn load_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg: RunConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| {
                format!(
                    "config parse error in {} at line {}, column {}: {e}",
                    path.display(),
                    e.line(),
                    e.column()
                )
            })?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn init_threads(cli: &Cli) {
    let threads = cli.threads.or_else(|| {
        std::env::var("WINDOWED_CONV_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore failures: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(cli: &Cli) -> Result<(), String> {
    init_threads(cli);
    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    let result: Result<(), CommandError> = match &cli.command {
        Command::Bound => cmd_bound(&cfg, out),
        Command::MidTrain { resume } => cmd_mid_train(&cfg, out, *resume),
        Command::MidEval { checkpoint, render } => cmd_mid_eval(&cfg, out, checkpoint, *render),
        Command::Rasterize => cmd_rasterize(&cfg, out),
        Command::Extract => cmd_extract(&cfg, out),
    };
    result.map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
