use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scenario::ScenarioResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    patient: &'a str,
    t_tr: Option<f64>,
    eta_beta: f64,
    eta_p: f64,
    t_peak: Option<f64>,
    v_max: Option<f64>,
    delta_v_log10: Option<f64>,
    di: Option<f64>,
    effective: Option<bool>,
}

/// Write scenario results. CSV holds one row per run with the headline
/// metrics; JSON holds everything, including provenance.
pub fn write_results(result: &ScenarioResult, format: ExportFormat, out: impl Write) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &result.runs {
                w.serialize(CsvRow {
                    patient: &r.patient,
                    t_tr: r.t_tr,
                    eta_beta: r.eta_beta,
                    eta_p: r.eta_p,
                    t_peak: r.t_peak,
                    v_max: r.v_max,
                    delta_v_log10: r.delta_v_log10,
                    di: r.di,
                    effective: r.effective,
                })?;
            }
            if result.runs.is_empty() {
                w.write_record(["patient", "t_tr", "eta_beta", "eta_p", "t_peak", "v_max", "delta_v_log10", "di", "effective"])?;
            }
            w.flush()?;
        }
        ExportFormat::Json => write_json(result, out)?,
    }
    Ok(())
}

pub fn export_results(result: &ScenarioResult, format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_results(result, format, file)
}

pub fn load_results_json(path: impl AsRef<Path>) -> Result<ScenarioResult> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Write flat rows as CSV or a JSON array.
pub fn write_rows<T: Serialize>(rows: &[T], format: ExportFormat, out: impl Write) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        ExportFormat::Json => write_json(&rows, out)?,
    }
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(value: &T, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
