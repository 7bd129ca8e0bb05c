use std::io::Read;
use std::path::Path;

use crate::estimation::ViralObservation;
use crate::error::{Error, Result};

/// Read observations from a `t_dpi,viral_load` CSV file.
///
/// A load written as `<DL` is censored below `DL`. Rows are sorted by time;
/// duplicate times are rejected.
pub fn load_viral_csv(path: impl AsRef<Path>) -> Result<Vec<ViralObservation>> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_viral_csv(file)
}

pub fn parse_viral_csv(reader: impl Read) -> Result<Vec<ViralObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t_dpi" || &headers[1] != "viral_load" {
        return Err(Error::Parse { line: 1, message: "header must be 't_dpi,viral_load'".into() });
    }

    let mut out: Vec<(u64, ViralObservation)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Parse { line, message };
        if record.len() != 2 {
            return Err(bad(format!("expected 2 fields, got {}", record.len())));
        }
        let t: f64 = record[0].parse().map_err(|_| bad(format!("invalid time '{}'", &record[0])))?;
        let raw = &record[1];
        let obs = if let Some(limit) = raw.strip_prefix('<') {
            let limit: f64 = limit.trim().parse().map_err(|_| bad(format!("invalid detection limit '{raw}'")))?;
            ViralObservation::censored(t, limit)
        } else {
            let v: f64 = raw.parse().map_err(|_| bad(format!("invalid viral load '{raw}'")))?;
            ViralObservation::measured(t, v)
        }
        .map_err(|e| bad(e.to_string()))?;
        out.push((line, obs));
    }

    if out.windows(2).any(|w| w[1].1.t < w[0].1.t) {
        log::warn!("observation times were not in ascending order; sorting");
        out.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
    }
    if let Some(w) = out.windows(2).find(|w| w[1].1.t == w[0].1.t) {
        return Err(Error::Parse { line: w[1].0.max(w[0].0), message: format!("duplicate time {}", w[1].1.t) });
    }
    Ok(out.into_iter().map(|(_, o)| o).collect())
}
