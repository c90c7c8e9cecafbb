//! CSV waveform ingestion (one sample per row, one signal column).
//!
//! Empty fields and `NaN`/`nan`/`NA` mark a missing sample and are carried as
//! `f64::NAN`; anything else that is not a number is an error naming the line.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cipher::SignalSegment;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for Column {
    type Err = std::convert::Infallible;

    /// A bare integer selects by index, anything else by header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(s.parse()
            .map(Column::Index)
            .unwrap_or_else(|_| Column::Name(s.to_string())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub column: Column,
    pub has_header: bool,
    pub sample_rate: f64,
    pub segment_len: usize,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            column: Column::Index(0),
            has_header: false,
            sample_rate: 500.0,
            segment_len: 300,
            delimiter: b',',
        }
    }
}

fn parse_sample(field: &str) -> Option<f64> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("nan") || f == "NA" {
        return Some(f64::NAN);
    }
    f.parse::<f64>().ok().filter(|v| !v.is_infinite())
}

/// Reads every sample of the selected column.
pub fn read_column<R: Read>(reader: R, opts: &CsvOptions) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .delimiter(opts.delimiter)
        .flexible(true)
        .from_reader(reader);
    let idx = match &opts.column {
        Column::Index(i) => *i,
        Column::Name(name) => {
            if !opts.has_header {
                return Err(Error::Ingest {
                    line: 1,
                    message: format!("column {name:?} selected by name but no header row"),
                });
            }
            let headers = rdr.headers().map_err(|e| Error::Ingest {
                line: 1,
                message: e.to_string(),
            })?;
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Ingest {
                    line: 1,
                    message: format!("no column named {name:?}"),
                })?
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Ingest {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = rec.get(idx).ok_or_else(|| Error::Ingest {
            line,
            message: format!("row has {} fields, column {idx} missing", rec.len()),
        })?;
        let v = parse_sample(field).ok_or_else(|| Error::Ingest {
            line,
            message: format!("not a number: {field:?}"),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Cuts samples into consecutive non-overlapping segments; the trailing
/// partial segment is dropped.
pub fn segment_samples(
    samples: &[f64],
    segment_len: usize,
    sample_rate: f64,
) -> Result<Vec<SignalSegment>> {
    if segment_len < 2 {
        return Err(Error::Domain(format!(
            "segment length {segment_len} below 2"
        )));
    }
    samples
        .chunks_exact(segment_len)
        .map(|c| SignalSegment::new(c.to_vec(), sample_rate))
        .collect()
}

pub fn ingest_reader<R: Read>(reader: R, opts: &CsvOptions) -> Result<Vec<SignalSegment>> {
    segment_samples(
        &read_column(reader, opts)?,
        opts.segment_len,
        opts.sample_rate,
    )
}

pub fn ingest_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Vec<SignalSegment>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(std::io::BufReader::new(f), opts)
}

/// Writes samples as a single-column CSV with the given header.
pub fn write_csv<W: std::io::Write>(writer: W, header: &str, samples: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::Store(e.to_string());
    w.write_record([header]).map_err(wrap)?;
    for v in samples {
        w.write_record([format!("{v:?}")]).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Store(e.to_string()))
}
