use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lrd_deconv_cli::commands::{self, Context};
use lrd_deconv_cli::config::RunConfig;
use lrd_deconv_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "lrd-deconv", version, about = "Wavelet deconvolution under long-range dependent noise")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out`, then `out/<name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "LRD_DECONV_THREADS")]
    threads: Option<usize>,
    /// Validate and print the plan without computing or writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate observations of the configured truth.
    Simulate,
    /// Estimate the signal from simulated observations.
    Estimate {
        /// Directory holding y.csv (and optionally truth.csv).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte-Carlo risk over the configured sample-size grid.
    Bench,
    /// Covariance eigenvalue bounds of the configured noise models.
    Eigencheck,
    /// Fit the decay class of the kernel for the configured design.
    Characterize,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("missing --config <FILE>".into()))?;
    let mut config = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let base_dir = path.parent().map(PathBuf::from).unwrap_or_default();
    let ctx = Context::new(config, base_dir, cli.out, cli.dry_run)?;
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Estimate { input } => commands::estimate(&ctx, input),
        Command::Bench => commands::bench(&ctx),
        Command::Eigencheck => commands::eigencheck(&ctx),
        Command::Characterize => commands::characterize(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
