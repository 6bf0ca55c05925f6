//! Library side of the `tfusion` command-line tool.

pub mod config;
mod diagnostics;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use tfusion::scenario::{run_experiment, ResultsTable};

pub use config::{parse_config, CliConfigFile, Experiment};
pub use diagnostics::{diagnostics_command, DiagnosticsArgs};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration or arguments.
    Config(String),
    /// Failure while running or writing results.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Overrides given on the command line of `tfusion run`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub parallel: Option<usize>,
}

/// `<dir>/<stem><suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Runs the configured experiment and writes its tables. Returns the files written.
pub fn run_command(args: &RunArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut exp = match &args.config {
        Some(path) => parse_config(path)?,
        None => CliConfigFile::default().into_experiment()?,
    };
    if let Some(runs) = args.runs {
        exp.scenario.runs = runs;
    }
    if let Some(seed) = args.seed {
        exp.scenario.seed = seed;
    }
    if let Some(parallel) = args.parallel {
        exp.scenario.parallel = parallel;
    }
    exp.scenario
        .validate()
        .map_err(|e| CliError::Config(format!("invalid command-line override: {e}")))?;
    let out = args
        .out
        .clone()
        .or(exp.output.clone())
        .unwrap_or_else(|| PathBuf::from(match args.format {
            OutputFormat::Csv => "results.csv",
            OutputFormat::Json => "results.json",
        }));

    let scenarios = match &exp.sweep {
        Some(list) => list.iter().map(|p| exp.scenario.with_outlier_prob(*p)).collect(),
        None => vec![exp.scenario.clone()],
    };
    let mut reports = Vec::with_capacity(scenarios.len());
    for cfg in &scenarios {
        let started = Instant::now();
        eprintln!(
            "p_o = {}: {} runs x {} steps, {} methods",
            cfg.process_noise.outlier_prob,
            cfg.runs,
            cfg.steps,
            exp.methods.len()
        );
        let report = run_experiment(cfg, &exp.methods).map_err(|e| CliError::Runtime(e.to_string()))?;
        eprintln!("  done in {:.1}s", started.elapsed().as_secs_f64());
        reports.push(report);
    }

    let table = ResultsTable::from_reports(&reports);
    let runtime = |e: tfusion::Error| CliError::Runtime(e.to_string());
    let written = match args.format {
        OutputFormat::Csv => {
            let summary = sibling(&out, ".summary.csv");
            table.write_steps_csv(create(&out)?).map_err(runtime)?;
            table.write_summary_csv(create(&summary)?).map_err(runtime)?;
            vec![out, summary]
        }
        OutputFormat::Json => {
            table.write_json(create(&out)?).map_err(runtime)?;
            vec![out]
        }
    };
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    Ok(written)
}
