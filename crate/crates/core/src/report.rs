//! Table-style run reports and their renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::decoy::{key_rate_with, Fluctuation, ObservedStatistics, ProtocolParams, RateEstimate};
use crate::network::{KeyPool, NetworkRun, Topology};
use crate::records::MeasurementRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub route: String,
    pub wavelength_nm: Option<u32>,
    pub distance_km: Option<f64>,
    pub attenuation_db: Option<f64>,
    pub sifted_kbps: f64,
    pub qber: f64,
    pub final_kbps: f64,
    pub q1_lower: f64,
    pub e1_upper: f64,
    pub no_key: Option<String>,
    pub pulses: Option<u64>,
    pub sifted_bits: Option<u64>,
    pub leaked_bits: Option<u64>,
    pub final_bits_formula: Option<u64>,
    pub final_bits_measured: Option<u64>,
    pub deposited_bits: Option<u64>,
    pub note: Option<String>,
}

impl ReportRow {
    fn from_estimate(route: &str, stats: &ObservedStatistics, est: &RateEstimate) -> Self {
        Self {
            route: route.to_owned(),
            wavelength_nm: None,
            distance_km: None,
            attenuation_db: None,
            sifted_kbps: est.sifted_rate_bps / 1000.0,
            qber: stats.signal.qber,
            final_kbps: est.final_rate_bps / 1000.0,
            q1_lower: est.q1_lower,
            e1_upper: est.e1_upper,
            no_key: est.no_key.map(|r| r.to_string()),
            pulses: None,
            sifted_bits: None,
            leaked_bits: None,
            final_bits_formula: None,
            final_bits_measured: None,
            deposited_bits: None,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolRow {
    pub pair: String,
    pub produced_bits: u64,
    pub consumed_bits: u64,
    pub available_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: Option<u64>,
    pub pulses_per_link: Option<u64>,
    pub horizon_s: Option<f64>,
    pub fluctuation: Fluctuation,
    pub rows: Vec<ReportRow>,
    pub pools: Vec<PoolRow>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn any_without_key(&self) -> bool {
        self.rows.iter().any(|r| r.no_key.is_some())
    }

    pub fn row(&self, route: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.route == route)
    }
}

/// Key rates for each record. Routes found in `topology` also get their
/// wavelength, distance and attenuation.
pub fn analyze_records(
    records: &[MeasurementRecord],
    params: &ProtocolParams,
    fluctuation: Fluctuation,
    topology: Option<&Topology>,
) -> RunReport {
    let mut notes = Vec::new();
    let rows = records
        .iter()
        .map(|r| {
            let est = key_rate_with(&r.stats, params, fluctuation);
            let mut row = ReportRow::from_estimate(&r.route, &r.stats, &est);
            if let Some(link) = topology.and_then(|t| t.link_by_route(&r.route)) {
                row.wavelength_nm = link.wavelength_nm;
                row.distance_km = Some(link.distance_km);
                row.attenuation_db = Some(link.attenuation_db);
            }
            for w in &r.warnings {
                notes.push(format!("{}: {w}", r.route));
            }
            row
        })
        .collect();
    RunReport {
        command: "analyze".into(),
        seed: None,
        pulses_per_link: None,
        horizon_s: None,
        fluctuation,
        rows,
        pools: Vec::new(),
        notes,
    }
}

/// Report of a network simulation with the pool levels it left behind.
pub fn network_report(run: &NetworkRun, pool: &KeyPool, params: &ProtocolParams, fluctuation: Fluctuation) -> RunReport {
    let rows = run
        .links
        .iter()
        .map(|l| {
            let est = key_rate_with(&l.stats, params, fluctuation);
            let mut row = ReportRow::from_estimate(&l.route, &l.stats, &est);
            row.wavelength_nm = l.wavelength_nm;
            row.distance_km = Some(l.distance_km);
            row.attenuation_db = Some(l.attenuation_db);
            row.pulses = Some(l.pulses);
            if let Some(d) = &l.distill {
                row.sifted_bits = Some(d.sifted_bits);
                row.leaked_bits = Some(d.cascade_leaked_bits + d.verification_bits);
                row.final_bits_formula = Some(d.final_bits_formula);
                row.final_bits_measured = Some(d.final_bits_measured);
            }
            row.deposited_bits = Some(l.deposited_bits);
            row.note = l.note.clone();
            row
        })
        .collect();
    RunReport {
        command: "simulate".into(),
        seed: Some(run.seed),
        pulses_per_link: Some(run.pulses_per_link),
        horizon_s: Some(run.horizon_s),
        fluctuation,
        rows,
        pools: pool_rows(pool),
        notes: Vec::new(),
    }
}

pub fn pool_rows(pool: &KeyPool) -> Vec<PoolRow> {
    pool.levels()
        .into_iter()
        .map(|(pair, l)| PoolRow {
            pair: pair.to_string(),
            produced_bits: l.produced_bits,
            consumed_bits: l.consumed_bits,
            available_bits: l.available_bits,
        })
        .collect()
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

pub fn render_text(report: &RunReport) -> String {
    let mut out = String::new();
    let mut meta = vec![report.command.clone()];
    if let Some(seed) = report.seed {
        meta.push(format!("seed {seed}"));
    }
    if let Some(p) = report.pulses_per_link {
        meta.push(format!("{p} pulses/link"));
    }
    if let Some(h) = report.horizon_s {
        meta.push(format!("horizon {h:.3} s"));
    }
    if report.fluctuation == Fluctuation::Pessimistic {
        meta.push("pessimistic gains".into());
    }
    let _ = writeln!(out, "# {}", meta.join(", "));
    let simulated = report.rows.iter().any(|r| r.pulses.is_some());
    let _ = write!(
        out,
        "{:<8} {:>6} {:>6} {:>6} {:>9} {:>7} {:>9} {:>10} {:>8}",
        "route", "nm", "km", "dB", "sift_kbps", "qber%", "final_kbps", "q1_lower", "e1_upper"
    );
    if simulated {
        let _ = write!(out, " {:>10} {:>9} {:>9}", "pulses", "final_bits", "deposited");
    }
    out.push('\n');
    for r in &report.rows {
        let _ = write!(
            out,
            "{:<8} {:>6} {:>6} {:>6} {:>9.3} {:>7.2} {:>9.3} {:>10.4e} {:>8.4}",
            r.route,
            opt(r.wavelength_nm),
            opt(r.distance_km.map(|d| format!("{d:.1}"))),
            opt(r.attenuation_db.map(|d| format!("{d:.2}"))),
            r.sifted_kbps,
            r.qber * 100.0,
            r.final_kbps,
            r.q1_lower,
            r.e1_upper,
        );
        if simulated {
            let _ = write!(
                out,
                " {:>10} {:>9} {:>9}",
                opt(r.pulses),
                opt(r.final_bits_measured),
                opt(r.deposited_bits)
            );
        }
        out.push('\n');
    }
    for r in &report.rows {
        if let Some(reason) = &r.no_key {
            let _ = writeln!(out, "! {}: no secure key: {reason}", r.route);
        }
        if let Some(note) = &r.note {
            let _ = writeln!(out, "  {}: {note}", r.route);
        }
    }
    for n in &report.notes {
        let _ = writeln!(out, "  {n}");
    }
    if !report.pools.is_empty() {
        let _ = writeln!(out, "\n{:<6} {:>10} {:>10} {:>10}", "pool", "produced", "consumed", "available");
        for p in &report.pools {
            let _ = writeln!(
                out,
                "{:<6} {:>10} {:>10} {:>10}",
                p.pair, p.produced_bits, p.consumed_bits, p.available_bits
            );
        }
    }
    out
}

pub fn render_csv(report: &RunReport) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &report.rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_json(report: &RunReport) -> String {
    to_json(report)
}

/// Outcome of an encrypted transfer over pool keys.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoTranscript {
    pub seed: u64,
    pub from: String,
    pub to: String,
    pub route: String,
    pub frames: u64,
    pub bytes_delivered: u64,
    pub bytes_total: u64,
    pub complete: bool,
    pub intact: bool,
    pub keys_drawn: u64,
    pub bits_consumed: BTreeMap<String, u64>,
    pub pools: Vec<PoolRow>,
    pub stopped: Option<String>,
}

pub fn render_demo_text(t: &DemoTranscript) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# demo {} -> {}, seed {}", t.from, t.to, t.seed);
    let _ = writeln!(out, "route      {}", t.route);
    let _ = writeln!(
        out,
        "delivered  {} of {} bytes in {} frames",
        t.bytes_delivered, t.bytes_total, t.frames
    );
    let _ = writeln!(out, "intact     {}", if t.intact { "yes" } else { "NO" });
    let _ = writeln!(out, "keys       {} x 128 bits", t.keys_drawn);
    for (pair, bits) in &t.bits_consumed {
        let _ = writeln!(out, "consumed   {pair}: {bits} bits");
    }
    if let Some(reason) = &t.stopped {
        let _ = writeln!(out, "stopped    {reason}");
    }
    let _ = writeln!(out, "\n{:<6} {:>10} {:>10} {:>10}", "pool", "produced", "consumed", "available");
    for p in &t.pools {
        let _ = writeln!(
            out,
            "{:<6} {:>10} {:>10} {:>10}",
            p.pair, p.produced_bits, p.consumed_bits, p.available_bits
        );
    }
    out
}

pub fn render_pools_csv(pools: &[PoolRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in pools {
        w.serialize(p)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}
