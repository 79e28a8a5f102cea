use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wavenet_cli::commands::{
    cmd_bench, cmd_dwt, cmd_eval, cmd_filters, cmd_train, cmd_verify, DwtOptions,
    FiltersOptions, TrainOptions, TransformPath,
};
use wavenet_cli::Result;

#[derive(Parser)]
#[command(
    name = "wavenet",
    version,
    about = "Wavelet transforms, orthonormal filter banks, and wavelet channel attention",
    after_help = "Exit codes: 0 success, 1 user error, 2 verification failure.\n\
                  WAVENET_THREADS caps the worker thread count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transform a PGM image and write the subband rasters
    Dwt {
        /// Input image (P2 or P5 graymap)
        input: PathBuf,
        /// Transform route: matmul | conv
        #[arg(long, default_value = "conv")]
        path: String,
        /// Filter bank: haar | random
        #[arg(long, default_value = "haar")]
        bank: String,
        /// Normalization: orthonormal | averaging
        #[arg(long, default_value = "orthonormal")]
        norm: String,
        /// Seed for random banks
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Filter side length for random banks (2..=5)
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Recursion depth; the approximation feeds each next level
        #[arg(long, default_value_t = 1)]
        levels: usize,
        /// Output directory for a.pgm, v.pgm, h.pgm, d.pgm
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate or inspect orthonormal filter-bank assignments
    Filters {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Filter side length (2..=5)
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Channel-width divisor for desk-scale assignments
        #[arg(long, default_value_t = 1)]
        scale: usize,
        /// Write the assignment to a checkpoint file
        #[arg(long)]
        export: Option<PathBuf>,
        /// Read an assignment back and re-validate it (exit 2 on failure)
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Run the invariant suite and report pass/fail per property
    Verify {
        /// Sample count for the recursive-approximation sweep
        #[arg(long, default_value_t = 1000)]
        seeds: usize,
    },
    /// Train a classifier and write checkpoint + metrics CSV
    Train {
        /// key = value config file (defaults are built in)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override squeeze mode: gap | haar | wavenet | wavenet_c
        #[arg(long)]
        squeeze: Option<String>,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the configured test split
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Time the transform paths and squeeze variants
    Bench {
        /// Comma-separated even image sizes
        #[arg(long, default_value = "8,16,32")]
        sizes: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Dwt {
            input,
            path,
            bank,
            norm,
            seed,
            d,
            levels,
            out,
        } => cmd_dwt(&DwtOptions {
            input,
            path: TransformPath::parse(&path)?,
            bank,
            norm: wavenet_cli::commands::parse_norm(&norm)?,
            seed,
            d,
            levels,
            out,
        }),
        Command::Filters {
            seed,
            d,
            scale,
            export,
            import,
        } => cmd_filters(&FiltersOptions {
            seed,
            d,
            scale,
            export,
            import,
        }),
        Command::Verify { seeds } => cmd_verify(seeds),
        Command::Train {
            config,
            squeeze,
            seed,
            out,
        } => cmd_train(&TrainOptions {
            config,
            squeeze,
            seed,
            out,
        }),
        Command::Eval { checkpoint, config } => cmd_eval(&checkpoint, config.as_ref()),
        Command::Bench { sizes, seed } => cmd_bench(&sizes, seed),
    }
}

fn main() -> ExitCode {
    if let Ok(value) = std::env::var("WAVENET_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version are successes; everything else is a user error.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
