use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tfusion::fusion::AaVariant;
use tfusion_cli::{diagnostics_command, run_command, DiagnosticsArgs, OutputFormat, RunArgs};

/// Student's t multi-sensor fusion experiments.
#[derive(Parser)]
#[command(name = "tfusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo tracking experiment and write RMSE tables.
    Run {
        /// TOML configuration file; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-step table path; CSV output also writes `<stem>.summary.csv` beside it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Write KL-divergence curves and middle-distribution residuals.
    Diagnostics {
        /// KL curve path; CSV output also writes `<stem>.middle.csv` beside it.
        #[arg(long, default_value = "diagnostics.csv")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        /// Largest mean offset in scale standard deviations.
        #[arg(long, default_value_t = 3.0)]
        max_offset: f64,
        #[arg(long, default_value_t = 13)]
        points: usize,
        /// Comma-separated scale ratios of the second density.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        scale_ratios: Vec<f64>,
        #[arg(long, default_value_t = 3.0)]
        dof: f64,
        /// Weight objective: v1 or v2.
        #[arg(long, default_value = "v1", value_parser = parse_variant)]
        variant: AaVariant,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_variant(s: &str) -> Result<AaVariant, String> {
    match s {
        "v1" => Ok(AaVariant::V1),
        "v2" => Ok(AaVariant::V2),
        _ => Err(format!("expected v1 or v2, got '{s}'")),
    }
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run {
            config,
            runs,
            seed,
            out,
            format,
            parallel,
        } => run_command(&RunArgs {
            config,
            runs,
            seed,
            out,
            format,
            parallel,
        }),
        Command::Diagnostics {
            out,
            format,
            max_offset,
            points,
            scale_ratios,
            dof,
            variant,
            samples,
            seed,
        } => diagnostics_command(&DiagnosticsArgs {
            out,
            format,
            max_offset,
            points,
            scale_ratios,
            dof,
            variant,
            samples,
            seed,
        }),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tfusion: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
