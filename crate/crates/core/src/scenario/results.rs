//! Flat tables of experiment results for CSV and JSON output.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::{Error, Result};

/// RMSE of one method at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub p_o: f64,
    pub method: String,
    pub step: usize,
    pub position_rmse: f64,
    pub velocity_rmse: f64,
}

/// Time-averaged results of one method at one outlier probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub p_o: f64,
    pub method: String,
    pub avg_position_rmse: f64,
    pub avg_velocity_rmse: f64,
    /// Empty for methods without AA weights.
    pub mean_weight_sensor_1: Option<f64>,
    pub included_runs: usize,
    pub excluded_runs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub steps: Vec<StepRow>,
    pub summary: Vec<SummaryRow>,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

impl ResultsTable {
    pub fn from_reports(reports: &[RunReport]) -> Self {
        let mut table = Self::default();
        for report in reports {
            let p_o = report.outlier_prob;
            for m in &report.methods {
                for (k, (pos, vel)) in m.position_rmse.iter().zip(&m.velocity_rmse).enumerate() {
                    table.steps.push(StepRow {
                        p_o,
                        method: m.name.clone(),
                        step: k + 1,
                        position_rmse: *pos,
                        velocity_rmse: *vel,
                    });
                }
                table.summary.push(SummaryRow {
                    p_o,
                    method: m.name.clone(),
                    avg_position_rmse: m.avg_position_rmse,
                    avg_velocity_rmse: m.avg_velocity_rmse,
                    mean_weight_sensor_1: m.mean_weight_sensor_1,
                    included_runs: m.included_runs,
                    excluded_runs: m.excluded_runs,
                });
            }
        }
        table
    }

    pub fn write_steps_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.steps)
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.summary)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self).map_err(|e| Error::Io(e.to_string()))?;
        out.flush()?;
        Ok(())
    }

    pub fn read_steps_csv<R: std::io::Read>(input: R) -> Result<Vec<StepRow>> {
        read_rows(input)
    }

    pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<SummaryRow>> {
        read_rows(input)
    }

    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self> {
        serde_json::from_reader(input).map_err(|e| Error::Io(e.to_string()))
    }
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: std::io::Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_error)
}
