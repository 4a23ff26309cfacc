use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ldvd::cli::{self, CliError, Figure};

/// Video-GAN discriminator lab: train, count, plot and verify.
#[derive(Parser)]
#[command(name = "ldvd", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every discriminator variant in a config and write artifacts.
    Run {
        /// Config file, or the name of a bundled config.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-layer and total parameter counts for a preset or spec file.
    Params {
        spec: String,
        /// Preset to report the reduction against.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Render SVG figures from a run directory.
    Plot {
        run_dir: PathBuf,
        /// spectra, gradnorms or losses; all three when omitted.
        #[arg(long)]
        figure: Option<String>,
    },
    /// Run the numerical self-checks and print the parameter-count table.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(args: Args) -> Result<(), CliError> {
    match args.cmd {
        Cmd::Run { config, out, seed } => {
            let s = cli::cmd_run(&config, &out, seed)?;
            for v in &s.variants {
                println!("{}: {} iterations -> {}", v.name, v.iterations, v.dir.display());
            }
        }
        Cmd::Params { spec, baseline } => print!("{}", cli::cmd_params(&spec, baseline.as_deref())?),
        Cmd::Plot { run_dir, figure } => {
            let fig = match figure.as_deref() {
                None => None,
                Some(f) => Some(Figure::parse(f).ok_or_else(|| {
                    CliError::Usage(format!("unknown figure {f:?}; expected spectra, gradnorms or losses"))
                })?),
            };
            for p in cli::cmd_plot(&run_dir, fig)? {
                println!("{}", p.display());
            }
        }
        Cmd::Verify { seed } => {
            let (report, res) = cli::cmd_verify(seed);
            print!("{report}");
            res?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ldvd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
