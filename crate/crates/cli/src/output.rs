//! `trace.csv` and `summary.json`.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use qnstr_core::{Diagnostics, IterationRecord, StationarityCertificate};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const TRACE_HEADER: [&str; 8] = [
    "k", "f_norm", "fn_norm", "g_norm", "delta", "rho", "accepted", "wall_ms",
];

/// Shortest round-trip form; NaN (columns a method does not have) is empty.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:e}")
    }
}

fn record_fields(rec: &IterationRecord, wall: bool) -> [String; 8] {
    [
        rec.k.to_string(),
        format_float(rec.f_norm),
        format_float(rec.fn_norm),
        format_float(rec.g_norm),
        format_float(rec.delta),
        format_float(rec.rho),
        rec.accepted.to_string(),
        if wall {
            format_float(rec.wall_ms)
        } else {
            String::new()
        },
    ]
}

/// Appends one row per iteration, flushing after each so an interrupted
/// run leaves a readable prefix.
pub struct TraceWriter {
    writer: csv::Writer<File>,
    wall: bool,
}

impl TraceWriter {
    pub fn create(path: &Path, wall: bool) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_writer(File::create(path)?);
        writer.write_record(TRACE_HEADER)?;
        writer.flush()?;
        Ok(Self { writer, wall })
    }

    /// Reopens an existing trace for a resumed run, dropping rows at or
    /// after iteration `from_k`.
    pub fn resume(path: &Path, wall: bool, from_k: usize) -> Result<Self, CliError> {
        let mut kept = Vec::new();
        if path.exists() {
            let mut reader = csv::Reader::from_path(path)?;
            for row in reader.records() {
                let row = row?;
                let k: usize = row.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| {
                    CliError::Config(format!("malformed trace {}", path.display()))
                })?;
                if k < from_k {
                    kept.push(row);
                }
            }
        }
        let mut writer = Self::create(path, wall)?;
        for row in &kept {
            writer.writer.write_record(row)?;
        }
        writer.writer.flush()?;
        drop(writer);
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            writer: csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(file),
            wall,
        })
    }

    pub fn write(&mut self, rec: &IterationRecord) -> Result<(), CliError> {
        self.writer.write_record(record_fields(rec, self.wall))?;
        self.writer.flush()?;
        Ok(())
    }
}

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub f_norm: f64,
    pub fn_norm: f64,
    pub g_norm: f64,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub accepted: bool,
    pub wall_ms: Option<f64>,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}

/// Long-format rows for sweeps: the trace columns prefixed by the sweep
/// coordinates.
pub fn write_long_csv(
    path: &Path,
    axis: &str,
    runs: &[(String, String, Vec<IterationRecord>)],
    wall: bool,
) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["axis", "value", "method"];
    header.extend(TRACE_HEADER);
    writer.write_record(&header)?;
    for (value, method, trace) in runs {
        for rec in trace {
            let mut row = vec![axis.to_string(), value.clone(), method.clone()];
            row.extend(record_fields(rec, wall));
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub method: String,
    pub problem: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub repeat_index: usize,
    pub stop_reason: String,
    pub converged: bool,
    pub iterations: usize,
    pub initial_f_norm: f64,
    pub initial_fn_norm: f64,
    pub final_f_norm: f64,
    pub final_fn_norm: f64,
    /// `r` never increased along the trace.
    pub monotone_r: bool,
    /// `‖F_N‖ ≤ κµ + ε ≤ 2ε` bookkeeping.
    pub certificate: StationarityCertificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
    pub config: ExperimentConfig,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, summary)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary, CliError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
