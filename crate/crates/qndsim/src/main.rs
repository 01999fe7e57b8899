use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qndsim::commands::{self, Ctx};
use qndsim::config::RunConfig;
use qndsim::error::CliError;
use qndsim::pipeline::with_workers;

#[derive(Parser)]
#[command(name = "qndsim", version, about = "Fluxonium dispersive-readout simulator")]
struct Cli {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single seed (overrides `seeds`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Transition frequencies and chi_ge(0) over the flux sweep.
    Spectrum,
    /// Fit circuit parameters to measured transition frequencies.
    FitSpectrum {
        /// CSV with columns flux, f_ge (GHz) and optionally f_gf.
        #[arg(long)]
        data: PathBuf,
    },
    /// Photon-number-dependent dispersive shift at both flux points.
    Chi,
    /// Measurement time needed for the target SNR versus photon number.
    SnrTime,
    /// Quantum-jump traces.
    Jumps {
        #[command(subcommand)]
        action: JumpsAction,
    },
    /// Measurement-based state preparation with feedback.
    StatePrep,
    /// Photon-number calibration, efficiency and phase response.
    Calibrate {
        /// CSV with columns power, stark_mhz.
        #[arg(long)]
        stark: PathBuf,
    },
}

#[derive(Subcommand)]
enum JumpsAction {
    /// Write one synthetic IQ trace per seed.
    Simulate,
    /// Extract rates, dwell histograms and QND fidelity from traces.
    Analyze {
        #[arg(long, required = true)]
        trace: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let Format::Csv = cli.format;
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default().validated()?,
    };
    let ctx = Ctx::new(&cfg, cli.out, cli.seed);
    with_workers(cli.workers, || match &cli.command {
        Command::Spectrum => commands::spectrum(&ctx),
        Command::FitSpectrum { data } => commands::fit_spectrum(&ctx, data),
        Command::Chi => commands::chi(&ctx),
        Command::SnrTime => commands::snr_time(&ctx),
        Command::Jumps { action: JumpsAction::Simulate } => commands::jumps_simulate(&ctx),
        Command::Jumps { action: JumpsAction::Analyze { trace } } => commands::jumps_analyze(&ctx, trace),
        Command::StatePrep => commands::state_prep_cmd(&ctx),
        Command::Calibrate { stark } => commands::calibrate(&ctx, stark),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
