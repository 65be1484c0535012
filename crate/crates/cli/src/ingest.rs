//! CSV ingestion: header row, a date column, then numeric series.

use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("row {row}: {message}")]
    Malformed { row: u64, message: String },
    #[error("row {row}, column `{column}`: missing value")]
    Missing { row: u64, column: String },
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumeric { row: u64, column: String, value: String },
    #[error("row {row}: `{value}` is not a date (YYYY-MM-DD, YYYY-MM or an integer)")]
    BadDate { row: u64, value: String },
    #[error("row {row}: date `{value}` does not follow the previous one")]
    NonMonotone { row: u64, value: String },
    #[error("row {row}: date `{value}` mixes formats with earlier rows")]
    MixedDates { row: u64, value: String },
    #[error("need a date column and at least one series, found {0} columns")]
    TooFewColumns(usize),
    #[error("no data rows")]
    Empty,
}

/// Calendar stamp of one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stamp {
    Day(NaiveDate),
    Month { year: i32, month: u32 },
    Index(i64),
}

impl Stamp {
    pub fn parse(s: &str) -> Option<Stamp> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Some(Stamp::Day(d));
        }
        if let Ok(d) = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d") {
            use chrono::Datelike;
            return Some(Stamp::Month { year: d.year(), month: d.month() });
        }
        s.parse().ok().map(Stamp::Index)
    }

    fn same_kind(&self, other: &Stamp) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stamp::Day(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Stamp::Month { year, month } => write!(f, "{year:04}-{month:02}"),
            Stamp::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Where a dataset came from and what was done to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
    pub centered: bool,
    /// Column means subtracted (zeros when not centered).
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dates: Vec<Stamp>,
    pub names: Vec<String>,
    /// `T × n`, row per observation.
    pub values: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn y_vectors(&self) -> Vec<DVector<f64>> {
        self.values.iter().map(|r| DVector::from_column_slice(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub center: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { center: true }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn ingest(path: &Path, opts: IngestOptions) -> Result<Dataset, IngestError> {
    let bytes = std::fs::read(path).map_err(|e| IngestError::Read { path: path.display().to_string(), message: e.to_string() })?;
    parse(&bytes, &path.display().to_string(), opts)
}

/// Parse CSV bytes. Row numbers in errors are file line numbers, the
/// header being line 1.
pub fn parse(bytes: &[u8], origin: &str, opts: IngestOptions) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let header = rdr.headers().map_err(|e| IngestError::Malformed { row: 1, message: e.to_string() })?.clone();
    if header.len() < 2 {
        return Err(IngestError::TooFewColumns(header.len()));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates: Vec<Stamp> = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Malformed {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let raw_date = rec.get(0).unwrap_or("").trim();
        let stamp = Stamp::parse(raw_date).ok_or_else(|| IngestError::BadDate { row, value: raw_date.to_string() })?;
        if let Some(prev) = dates.last() {
            if !prev.same_kind(&stamp) {
                return Err(IngestError::MixedDates { row, value: raw_date.to_string() });
            }
            if stamp <= *prev {
                return Err(IngestError::NonMonotone { row, value: raw_date.to_string() });
            }
        }
        let mut obs = Vec::with_capacity(names.len());
        for (c, name) in names.iter().enumerate() {
            let cell = rec.get(c + 1).map(str::trim).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(IngestError::Missing { row, column: name.clone() });
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| IngestError::NonNumeric { row, column: name.clone(), value: cell.to_string() })?;
            obs.push(v);
        }
        if rec.len() > names.len() + 1 {
            return Err(IngestError::Malformed { row, message: format!("{} cells for {} columns", rec.len(), names.len() + 1) });
        }
        dates.push(stamp);
        values.push(obs);
    }
    if values.is_empty() {
        return Err(IngestError::Empty);
    }
    let n = names.len();
    let t = values.len() as f64;
    let mut means = vec![0.0; n];
    if opts.center {
        // Second pass removes the rounding left by the first.
        for _ in 0..2 {
            for (i, m) in means.iter_mut().enumerate() {
                let pass = values.iter().map(|r: &Vec<f64>| r[i]).sum::<f64>() / t;
                *m += pass;
                for r in values.iter_mut() {
                    r[i] -= pass;
                }
            }
        }
    }
    Ok(Dataset {
        provenance: Provenance { path: origin.to_string(), sha256: sha256_hex(bytes), rows: values.len(), centered: opts.center, means },
        dates,
        names,
        values,
    })
}
