//! Metric records and their CSV form.
//!
//! Column order is fixed: `scenario_id, metric_kind, eb_n0_db, value,
//! crlb_value, trials, error_blocks, seed`. Absent optional values are empty
//! cells. Floats use the shortest representation that parses back exactly.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 8] = [
    "scenario_id",
    "metric_kind",
    "eb_n0_db",
    "value",
    "crlb_value",
    "trials",
    "error_blocks",
    "seed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    MseCirTotal,
    MseCfrPerBin,
    Bler,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::MseCirTotal => "mse_cir_total",
            MetricKind::MseCfrPerBin => "mse_cfr_per_bin",
            MetricKind::Bler => "bler",
        }
    }
}

/// One aggregated output point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub scenario_id: String,
    pub metric_kind: MetricKind,
    pub eb_n0_db: f64,
    pub value: f64,
    pub crlb_value: Option<f64>,
    pub trials: u64,
    pub error_blocks: Option<u64>,
    pub seed: u64,
}

impl MetricRecord {
    pub fn bler(scenario_id: &str, eb_n0_db: f64, trials: u64, error_blocks: u64, seed: u64) -> Self {
        let value = if trials == 0 { 0.0 } else { error_blocks as f64 / trials as f64 };
        Self {
            scenario_id: scenario_id.to_string(),
            metric_kind: MetricKind::Bler,
            eb_n0_db,
            value,
            crlb_value: None,
            trials,
            error_blocks: Some(error_blocks),
            seed,
        }
    }

    /// 95% Wilson score interval of a BLER record (`None` for other kinds).
    pub fn wilson_interval(&self) -> Option<(f64, f64)> {
        Some(wilson_interval(self.error_blocks?, self.trials, 1.959_963_984_540_054))
    }
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn write_csv_to<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.scenario_id.clone(),
            r.metric_kind.as_str().to_string(),
            r.eb_n0_db.to_string(),
            r.value.to_string(),
            r.crlb_value.map(|v| v.to_string()).unwrap_or_default(),
            r.trials.to_string(),
            r.error_blocks.map(|v| v.to_string()).unwrap_or_default(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[MetricRecord], path: impl AsRef<Path>) -> Result<()> {
    write_csv_to(records, std::fs::File::create(path)?)
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::config(format!("unexpected CSV header {header:?}")));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::config(format!("bad float {s:?}: {e}")));
    let parse_u = |s: &str| s.parse::<u64>().map_err(|e| Error::config(format!("bad integer {s:?}: {e}")));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let kind = match &row[1] {
            "mse_cir_total" => MetricKind::MseCirTotal,
            "mse_cfr_per_bin" => MetricKind::MseCfrPerBin,
            "bler" => MetricKind::Bler,
            other => return Err(Error::config(format!("unknown metric kind {other:?}"))),
        };
        out.push(MetricRecord {
            scenario_id: row[0].to_string(),
            metric_kind: kind,
            eb_n0_db: parse_f(&row[2])?,
            value: parse_f(&row[3])?,
            crlb_value: if row[4].is_empty() { None } else { Some(parse_f(&row[4])?) },
            trials: parse_u(&row[5])?,
            error_blocks: if row[6].is_empty() { None } else { Some(parse_u(&row[6])?) },
            seed: parse_u(&row[7])?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    read_csv_from(std::fs::File::open(path)?)
}
