//! CSV and JSON emission of experiment records.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::MetricRecord;
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 17] = [
    "scenario_id",
    "seed",
    "P",
    "V",
    "topology",
    "accepted",
    "benefit",
    "upper_bound",
    "search_slots",
    "prune_slots",
    "benefit_slots",
    "msgs_per_sensor",
    "algo",
    "iterations",
    "messages",
    "mse",
    "converged",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::invalid(format!("unknown output format {other:?}"))),
        }
    }
}

/// One CSV line: a replication, or one estimator run of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scenario_id: String,
    pub seed: u64,
    #[serde(rename = "P")]
    pub sensors: usize,
    #[serde(rename = "V")]
    pub v_count: usize,
    pub topology: String,
    pub accepted: bool,
    pub benefit: Option<f64>,
    pub upper_bound: Option<f64>,
    pub search_slots: u64,
    pub prune_slots: u64,
    pub benefit_slots: u64,
    pub msgs_per_sensor: f64,
    pub algo: Option<String>,
    pub iterations: Option<u64>,
    pub messages: Option<u64>,
    pub mse: Option<f64>,
    pub converged: Option<bool>,
}

/// Flattens records into CSV rows. When one record holds estimator runs at
/// several noise levels, the scenario id of each row is suffixed with
/// `/noise=<σ²>` so that rows stay distinguishable.
pub fn csv_rows(records: &[MetricRecord]) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for r in records {
        let base = CsvRow {
            scenario_id: r.scenario_id.clone(),
            seed: r.seed,
            sensors: r.sensors,
            v_count: r.v_count,
            topology: r.topology.to_string(),
            accepted: r.accepted,
            benefit: r.benefit,
            upper_bound: r.upper_bound,
            search_slots: r.search_slots,
            prune_slots: r.prune_slots,
            benefit_slots: r.benefit_slots,
            msgs_per_sensor: r.msgs_per_sensor,
            algo: None,
            iterations: None,
            messages: None,
            mse: None,
            converged: None,
        };
        if r.estimators.is_empty() {
            rows.push(base);
            continue;
        }
        let first = r.estimators[0].noise_variance;
        let several = r.estimators.iter().any(|e| e.noise_variance != first);
        for e in &r.estimators {
            let scenario_id = if several {
                format!("{}/noise={}", r.scenario_id, e.noise_variance)
            } else {
                r.scenario_id.clone()
            };
            rows.push(CsvRow {
                scenario_id,
                algo: Some(e.algo.name().to_string()),
                iterations: Some(e.iterations),
                messages: Some(e.messages),
                mse: Some(e.mse),
                converged: Some(e.converged),
                ..base.clone()
            });
        }
    }
    rows
}

pub fn write_csv<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for row in csv_rows(records) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::invalid(format!("unexpected CSV header {headers:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<W: Write>(records: &[MetricRecord], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, records)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn emit_results(records: &[MetricRecord], format: Format, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(records, &mut out)?,
        Format::Json => write_json(records, &mut out)?,
    }
    out.flush()?;
    Ok(())
}
