//! `pnrres`: photon-number resolvability, simulation, fitting and
//! classification for SNSPD arrival-time data.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use files::OutputDir;

#[derive(Parser)]
#[command(name = "pnrres", version, about = "Photon-number resolvability of SNSPD arrival-time histograms")]
struct Cli {
    /// Directory for every output file; created if missing.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Mode, half-maximum points and FWHM of one EMG peak.
    Fwhm {
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, allow_negative_numbers = true)]
        sigma: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        tau: f64,
        /// Also write the result to this file.
        #[arg(long)]
        out: Option<String>,
    },
    /// Resolvability report plus the peak-separation and density plot data.
    Resolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<String>,
        /// Time points in the component density grid.
        #[arg(long, default_value_t = 801)]
        grid_points: usize,
    },
    /// Simulate a time-tag stream, optionally binned into a histogram.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        bin_width_ps: Option<f64>,
        /// Histogram range as `lo:hi`.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        range_ps: Option<(f64, f64)>,
        /// Name of the tag file (default tags.csv).
        #[arg(long)]
        out: Option<String>,
    },
    /// Maximum-likelihood fit of the model to a histogram or tag file.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Histogram CSV, or a tag CSV to be binned.
        #[arg(long)]
        input: PathBuf,
        /// Seed for the restart perturbations (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        bin_width_ps: Option<f64>,
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        range_ps: Option<(f64, f64)>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Label tags with MAP thresholds and tally the confusion matrices.
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Number of labels B; the last one means "B or more" (default n_max).
        #[arg(long)]
        labels: Option<usize>,
        /// Use the thresholds of this decision-rule file instead.
        #[arg(long)]
        rule: Option<PathBuf>,
        /// Name of the labeled tag file (default labeled.csv).
        #[arg(long)]
        out: Option<String>,
    },
    /// Resolvability and analytic classification summary for a model.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        labels: Option<usize>,
        #[arg(long)]
        out: Option<String>,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("hi: {e}"))?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err("need finite lo < hi".into());
    }
    Ok((lo, hi))
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("PNRRES_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("PNRRES_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let out = OutputDir::create(&cli.output_dir)?;
    let f = cli.format;
    match cli.command {
        Command::Fwhm { mu, sigma, tau, out: name } => commands::fwhm(&out, f, mu, sigma, tau, name.as_deref()),
        Command::Resolve { config, out: name, grid_points } => {
            commands::resolve(&out, f, &config, name.as_deref(), grid_points)
        }
        Command::Simulate { config, seed, shots, bin_width_ps, range_ps, out: name } => {
            commands::simulate(&out, f, &config, seed, shots, bin_width_ps, range_ps, name.as_deref())
        }
        Command::Fit { config, input, seed, bin_width_ps, range_ps, out: name } => {
            commands::fit(&out, f, &config, &input, seed, bin_width_ps, range_ps, name.as_deref())
        }
        Command::Classify { config, input, labels, rule, out: name } => {
            commands::classify(&out, f, &config, &input, labels, rule.as_deref(), name.as_deref())
        }
        Command::Report { config, labels, out: name } => commands::report(&out, f, &config, labels, name.as_deref()),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .filter_map(|c| c.downcast_ref::<pnrres_core::Error>())
        .any(pnrres_core::Error::is_numerical);
    if numerical {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
