//! Measurement-record CSV.
//!
//! Header: `route,n_mu,q_mu,e_mu,n_nu,q_nu,e_nu,n_vac,q_vac,e_vac,duration_s`,
//! one row per link. Pulse counts accept scientific notation (`1.25e9`).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoy::{ClassStats, DecoyError, ObservedStatistics, StatsWarning};

pub const HEADER: [&str; 11] = [
    "route",
    "n_mu",
    "q_mu",
    "e_mu",
    "n_nu",
    "q_nu",
    "e_nu",
    "n_vac",
    "q_vac",
    "e_vac",
    "duration_s",
];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line} ({route}): {source}")]
    Validation {
        line: u64,
        route: String,
        #[source]
        source: DecoyError,
    },
    #[error("csv output: {0}")]
    Write(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub route: String,
    pub stats: ObservedStatistics,
    pub warnings: Vec<StatsWarning>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    route: String,
    n_mu: f64,
    q_mu: f64,
    e_mu: f64,
    n_nu: f64,
    q_nu: f64,
    e_nu: f64,
    n_vac: f64,
    q_vac: f64,
    e_vac: f64,
    duration_s: f64,
}

fn count(value: f64, field: &str, line: u64) -> Result<u64, RecordError> {
    if !(value.is_finite() && value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
        return Err(RecordError::Parse {
            line,
            message: format!("{field} = {value} is not a pulse count"),
        });
    }
    Ok(value as u64)
}

pub fn load_measurement_records<R: Read>(source: R) -> Result<Vec<MeasurementRecord>, RecordError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(|e| RecordError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if !headers.is_empty() && headers.iter().ne(HEADER) {
        return Err(RecordError::Parse {
            line: 1,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }

    let mut out = Vec::new();
    for result in reader.deserialize::<Row>() {
        let row = result.map_err(|e| RecordError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        let stats = ObservedStatistics {
            signal: ClassStats {
                pulses: count(row.n_mu, "n_mu", line)?,
                gain: row.q_mu,
                qber: row.e_mu,
            },
            decoy: ClassStats {
                pulses: count(row.n_nu, "n_nu", line)?,
                gain: row.q_nu,
                qber: row.e_nu,
            },
            vacuum: ClassStats {
                pulses: count(row.n_vac, "n_vac", line)?,
                gain: row.q_vac,
                qber: row.e_vac,
            },
            duration_s: row.duration_s,
        };
        let warnings = stats.validate().map_err(|source| RecordError::Validation {
            line,
            route: row.route.clone(),
            source,
        })?;
        out.push(MeasurementRecord {
            route: row.route,
            stats,
            warnings,
        });
    }
    Ok(out)
}

pub fn write_measurement_records<W: Write>(sink: W, records: &[(String, ObservedStatistics)]) -> Result<(), RecordError> {
    let mut writer = csv::Writer::from_writer(sink);
    for (route, s) in records {
        writer.serialize(Row {
            route: route.clone(),
            n_mu: s.signal.pulses as f64,
            q_mu: s.signal.gain,
            e_mu: s.signal.qber,
            n_nu: s.decoy.pulses as f64,
            q_nu: s.decoy.gain,
            e_nu: s.decoy.qber,
            n_vac: s.vacuum.pulses as f64,
            q_vac: s.vacuum.gain,
            e_vac: s.vacuum.qber,
            duration_s: s.duration_s,
        })?;
    }
    if records.is_empty() {
        writer.write_record(HEADER)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
