//! `tfusion diagnostics`: KL curves and middle-distribution residuals.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use tfusion::diagnostics::{kl_curve, middle_curve};
use tfusion::fusion::{AaVariant, DofRule};
use tfusion::StudentT;

use crate::{create, sibling, CliError, OutputFormat};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsArgs {
    pub out: PathBuf,
    pub format: OutputFormat,
    /// Largest mean offset, in units of the first density's scale σ.
    pub max_offset: f64,
    pub points: usize,
    /// Scale of the second density relative to the first (both isotropic 2-D).
    pub scale_ratios: Vec<f64>,
    pub dof: f64,
    pub variant: AaVariant,
    pub samples: usize,
    pub seed: u64,
}

impl Default for DiagnosticsArgs {
    fn default() -> Self {
        Self {
            out: PathBuf::from("diagnostics.csv"),
            format: OutputFormat::Csv,
            max_offset: 3.0,
            points: 13,
            scale_ratios: vec![1.0, 2.0, 4.0],
            dof: 3.0,
            variant: AaVariant::V1,
            samples: 100_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct CurveRow {
    scale_ratio: f64,
    offset: f64,
    mc_kl: f64,
    mc_std_error: f64,
    moment_gaussian_kl: f64,
    scale_gaussian_kl: f64,
}

#[derive(Debug, Clone, Serialize)]
struct MiddleOut {
    scale_ratio: f64,
    offset: f64,
    weight_first: f64,
    kl_first: f64,
    kl_second: f64,
    residual: f64,
}

#[derive(Serialize)]
struct Diagnostics {
    kl_curve: Vec<CurveRow>,
    middle: Vec<MiddleOut>,
}

fn compute(args: &DiagnosticsArgs) -> Result<Diagnostics, CliError> {
    if args.points < 2 || !(args.max_offset > 0.0) || args.samples == 0 || args.scale_ratios.is_empty() {
        return Err(CliError::Config(
            "need points >= 2, max_offset > 0, samples > 0 and at least one scale ratio".into(),
        ));
    }
    let config = |e: tfusion::Error| CliError::Config(e.to_string());
    let runtime = |e: tfusion::Error| CliError::Runtime(e.to_string());
    let offsets: Vec<f64> = (0..args.points)
        .map(|i| args.max_offset * i as f64 / (args.points - 1) as f64)
        .collect();
    let direction = DVector::from_vec(vec![1.0, 0.0]);
    let p = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), args.dof).map_err(config)?;

    let mut out = Diagnostics {
        kl_curve: Vec::new(),
        middle: Vec::new(),
    };
    for &ratio in &args.scale_ratios {
        eprintln!("scale ratio {ratio}: {} offsets", offsets.len());
        let q = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2) * ratio, args.dof).map_err(config)?;
        for r in kl_curve(&p, &q, &direction, &offsets, args.samples, args.seed).map_err(runtime)? {
            out.kl_curve.push(CurveRow {
                scale_ratio: ratio,
                offset: r.offset,
                mc_kl: r.mc_kl,
                mc_std_error: r.mc_std_error,
                moment_gaussian_kl: r.moment_gaussian_kl,
                scale_gaussian_kl: r.scale_gaussian_kl,
            });
        }
        let middle = middle_curve(
            &p,
            &q,
            &direction,
            &offsets,
            args.variant,
            DofRule::Average,
            args.samples,
            args.seed,
        )
        .map_err(runtime)?;
        for r in middle {
            out.middle.push(MiddleOut {
                scale_ratio: ratio,
                offset: r.offset,
                weight_first: r.weight_first,
                kl_first: r.kl_first,
                kl_second: r.kl_second,
                residual: r.residual,
            });
        }
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &std::path::Path, rows: &[T]) -> Result<(), CliError> {
    let runtime = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(runtime)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Computes the diagnostics and writes them. Returns the files written.
pub fn diagnostics_command(args: &DiagnosticsArgs) -> Result<Vec<PathBuf>, CliError> {
    let d = compute(args)?;
    let written = match args.format {
        OutputFormat::Csv => {
            let middle = sibling(&args.out, ".middle.csv");
            write_csv(&args.out, &d.kl_curve)?;
            write_csv(&middle, &d.middle)?;
            vec![args.out.clone(), middle]
        }
        OutputFormat::Json => {
            let mut w = create(&args.out)?;
            serde_json::to_writer_pretty(&mut w, &d)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            std::io::Write::flush(&mut w).map_err(|e| CliError::Runtime(e.to_string()))?;
            vec![args.out.clone()]
        }
    };
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    Ok(written)
}
