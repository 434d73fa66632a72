//! Field data and the default network scenario, embedded at build time.

use crate::records::{load_measurement_records, MeasurementRecord};

/// Per-link pulse counts, gains and QBERs of the seven-node field network
/// over a 20 minute run, in the measurement-record CSV schema.
pub const TABLE2_CSV: &str = include_str!("../fixtures/table2.csv");

/// Scenario file describing the seven-node hierarchical network.
pub const DEFAULT_SCENARIO_TOML: &str = include_str!("../fixtures/wuhu.toml");

pub fn table2_records() -> Vec<MeasurementRecord> {
    load_measurement_records(TABLE2_CSV.as_bytes()).expect("embedded field records are valid")
}
