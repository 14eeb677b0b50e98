//! `sptw`: command-line front end of the spectrum-sharing twin.
//!
//! Exit status is 0 on success, 1 on a usage error (synopsis on stderr) and
//! 2 when inputs are unreadable or violate a module contract.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "sptw", version, about = "Digital twin of a CBRS radar/cellular spectrum-sharing experiment")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Seed for every random draw of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with the command's parameters; missing fields take defaults.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Time,
    Frequency,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Radar,
    Cellular,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the radar waveform (`.iq` plus JSON sidecar).
    SynthRadar,
    /// Write an OFDM cellular proxy waveform.
    SynthCellular {
        #[arg(long, default_value_t = 200)]
        symbols: usize,
    },
    /// Write the scenario, its path-loss heatmap and per-link taps.
    MakeScenario {
        /// Time at which the heatmap is evaluated.
        #[arg(long, default_value_t = 0.0)]
        heatmap_t: f64,
    },
    /// Reduce a raw tap profile (delay_s,gain_re,gain_im CSV) to the
    /// emulator's constraints.
    ApproxTaps {
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
    },
    /// Generate a labeled record file and manifest.
    GenDataset {
        /// Overrides the sweep's records per grid cell.
        #[arg(long)]
        records_per_cell: Option<usize>,
        /// Also write a stratified 70/15/15 split into the manifest.
        #[arg(long)]
        split: bool,
    },
    /// Pass an IQ file through FIR taps with noise and receive gain.
    Emulate {
        /// Transmitted IQ file.
        #[arg(long, value_name = "IQ")]
        input: PathBuf,
        /// Constrained taps CSV; identity when omitted.
        #[arg(long, value_name = "CSV")]
        taps: Option<PathBuf>,
        /// AWGN power added before the receive gain.
        #[arg(long, default_value_t = 0.0)]
        noise_power: f64,
        #[arg(long, default_value_t = 0.0)]
        rx_gain_db: f64,
        /// Sample rate for inputs without a sidecar manifest.
        #[arg(long)]
        rate: Option<f64>,
        /// Correlate the output against this template.
        #[arg(long, value_name = "IQ")]
        template: Option<PathBuf>,
        /// Write the correlation per lag.
        #[arg(long, value_name = "CSV", requires = "template")]
        correlation_out: Option<PathBuf>,
    },
    /// Classify an IQ file window by window and vote, or score a dataset.
    Detect {
        /// CNN weights file.
        #[arg(long, value_name = "SPTWNN", required_unless_present = "baseline", conflicts_with = "baseline")]
        weights: Option<PathBuf>,
        /// Use the matched-filter detector instead of a CNN.
        #[arg(long)]
        baseline: bool,
        /// IQ capture to classify window by window.
        #[arg(long, value_name = "IQ", required_unless_present = "dataset", conflicts_with = "dataset")]
        input: Option<PathBuf>,
        /// Dataset manifest; writes accuracy per SNR and SINR.
        #[arg(long, value_name = "JSON")]
        dataset: Option<PathBuf>,
        /// Windows per classifier call and vote update.
        #[arg(long, default_value_t = 10)]
        batch: usize,
        /// Feature domain the CNN was trained on.
        #[arg(long, value_enum, default_value_t = DomainArg::Frequency)]
        domain: DomainArg,
        /// Matched-filter correlation threshold.
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
        /// Sample rate for inputs without a sidecar manifest.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Run the closed detection/vacate/resume loop.
    RunExperiment {
        /// CNN weights; the matched filter is used when omitted.
        #[arg(long, value_name = "SPTWNN")]
        weights: Option<PathBuf>,
        /// Feature domain the CNN was trained on.
        #[arg(long, value_enum, default_value_t = DomainArg::Frequency)]
        domain: DomainArg,
        /// Matched-filter correlation threshold.
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
        /// Radar switch-on time; overrides the config schedule.
        #[arg(long, requires = "radar_off")]
        radar_on: Option<f64>,
        /// Radar switch-off time.
        #[arg(long, requires = "radar_on")]
        radar_off: Option<f64>,
    },
    /// Time CNN inference against batch size.
    BenchLatency {
        /// Random default-architecture weights when omitted.
        #[arg(long, value_name = "SPTWNN")]
        weights: Option<PathBuf>,
        /// Comma-separated batch sizes.
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        batches: Vec<usize>,
        /// Timed repetitions per batch size (at least 10).
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Welch PSD of an IQ file or a freshly synthesized waveform.
    ExportPsd {
        #[arg(long, value_name = "IQ", conflicts_with = "source")]
        input: Option<PathBuf>,
        /// Synthesize this waveform instead of reading a file.
        #[arg(long, value_enum)]
        source: Option<SourceArg>,
        #[arg(long, default_value_t = 1024)]
        nfft: usize,
        /// Sample rate for inputs without a sidecar manifest.
        #[arg(long)]
        rate: Option<f64>,
    },
}

/// Errors that are the caller's fault rather than the data's.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn init_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("SPTW_THREADS") else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| UsageError(format!("SPTW_THREADS={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = init_threads().map_err(anyhow::Error::from).and_then(|()| commands::run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nUsage: sptw [OPTIONS] <COMMAND>\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
