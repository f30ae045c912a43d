//! Hourly exogenous traces and their CSV form.
//!
//! Schema: header `timestamp,demand_kwh,pv_kwh,price_per_kwh`, ISO-8601 timestamps one hour
//! apart, UTF-8, one row per hour.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};
use microgrid_core::spaces::StateSpace;
use microgrid_core::Exogenous64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: [&str; 4] = ["timestamp", "demand_kwh", "pv_kwh", "price_per_kwh"];
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: &'static str,
        message: String,
    },
    #[error("gap in trace: {missing} missing hour(s) between {before} and {after}")]
    Gap {
        before: NaiveDateTime,
        after: NaiveDateTime,
        missing: i64,
    },
    #[error("bad header: expected `{}`, found `{found}`", CSV_HEADER.join(","))]
    Header { found: String },
    #[error("price scale factor must be positive, got {0}")]
    ScaleFactor(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub timestamp: NaiveDateTime,
    pub exog: Exogenous64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub source: String,
    pub discretized: bool,
    pub price_scale: f64,
}

/// Time-ordered hourly observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousTrace {
    pub records: Vec<TraceRecord>,
    pub meta: TraceMeta,
}

impl ExogenousTrace {
    pub fn new(records: Vec<TraceRecord>, source: impl Into<String>) -> Self {
        Self {
            records,
            meta: TraceMeta {
                source: source.into(),
                discretized: false,
                price_scale: 1.0,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn exogenous(&self) -> Vec<Exogenous64> {
        self.records.iter().map(|r| r.exog).collect()
    }

    /// Multiplies every price by `factor` and records the factor in the metadata.
    pub fn scale_prices(&self, factor: f64) -> Result<Self, TraceError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(TraceError::ScaleFactor(factor));
        }
        let mut out = self.clone();
        for r in &mut out.records {
            r.exog.price *= factor;
        }
        out.meta.price_scale *= factor;
        Ok(out)
    }

    /// Snaps every record onto the bins of `sspace`.
    pub fn discretize(&self, sspace: &StateSpace<f64>) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.exog = sspace.discretize_observation(&r.exog);
        }
        out.meta.discretized = true;
        out
    }
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    NaiveDateTime::parse_from_str(raw, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M"))
        .ok()
        .or_else(|| {
            DateTime::parse_from_rfc3339(raw)
                .ok()
                .map(|d| d.naive_utc())
        })
}

fn parse_quantity(raw: &str, line: usize, column: &'static str) -> Result<f64, TraceError> {
    let value: f64 = raw.trim().parse().map_err(|_| TraceError::Parse {
        line,
        column,
        message: format!("`{raw}` is not a number"),
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(TraceError::Parse {
            line,
            column,
            message: format!("{value} must be finite and non-negative"),
        });
    }
    Ok(value)
}

/// Parses and validates a trace from CSV text.
pub fn read_trace<R: Read>(reader: R, source: &str) -> Result<ExogenousTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    if header != CSV_HEADER {
        return Err(TraceError::Header {
            found: header.join(","),
        });
    }
    let mut records: Vec<TraceRecord> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(i + 2, |p| p.line() as usize);
        let field = |k: usize| row.get(k).unwrap_or("");
        let timestamp = parse_timestamp(field(0)).ok_or_else(|| TraceError::Parse {
            line,
            column: CSV_HEADER[0],
            message: format!("`{}` is not an ISO-8601 timestamp", field(0)),
        })?;
        let demand = parse_quantity(field(1), line, CSV_HEADER[1])?;
        let pv = parse_quantity(field(2), line, CSV_HEADER[2])?;
        let price = parse_quantity(field(3), line, CSV_HEADER[3])?;

        if let Some(prev) = records.last() {
            let step = timestamp - prev.timestamp;
            if step > Duration::hours(1) && step.num_seconds() % 3600 == 0 {
                return Err(TraceError::Gap {
                    before: prev.timestamp,
                    after: timestamp,
                    missing: step.num_hours() - 1,
                });
            }
            if step != Duration::hours(1) {
                return Err(TraceError::Parse {
                    line,
                    column: CSV_HEADER[0],
                    message: format!(
                        "timestamp {timestamp} is not one hour after {}",
                        prev.timestamp
                    ),
                });
            }
        }
        records.push(TraceRecord {
            timestamp,
            exog: Exogenous64 { demand, pv, price },
        });
    }
    Ok(ExogenousTrace::new(records, source))
}

pub fn load_trace(path: &Path) -> Result<ExogenousTrace, TraceError> {
    read_trace(File::open(path)?, &path.display().to_string())
}

pub fn write_trace<W: Write>(writer: W, trace: &ExogenousTrace) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            r.exog.demand.to_string(),
            r.exog.pv.to_string(),
            r.exog.price.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(path: &Path, trace: &ExogenousTrace) -> Result<(), TraceError> {
    write_trace(File::create(path)?, trace)
}
