//! CSV ingestion.
//!
//! The first record is the header. Every column other than the timestamp and
//! the dropped ones becomes a variable; the target stays among them. Numeric
//! columns pass through unchanged, integer-coded categories included. Columns
//! named as categorical hold labels, which are replaced by integer codes in
//! order of first appearance. Rows with an empty or non-numeric value
//! in any retained numeric column are dropped and counted. A record with the
//! wrong number of fields is a hard error.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use delelstm_core::data::RawTable;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvSchema {
    pub target: String,
    pub timestamp: Option<String>,
    pub drop_cols: Vec<String>,
    pub categorical: Vec<String>,
}

impl CsvSchema {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            ..Self::default()
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

enum Column {
    Timestamp,
    Skip,
    Numeric,
    Categorical(HashMap<String, f64>),
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    if find(&schema.target).is_none() {
        return Err(delelstm_core::Error::MissingTarget(schema.target.clone()).into());
    }
    let mut kinds: Vec<Column> = header.iter().map(|_| Column::Numeric).collect();
    if let Some(ts) = &schema.timestamp {
        let i = find(ts).ok_or_else(|| Error::MissingColumn(ts.clone()))?;
        kinds[i] = Column::Timestamp;
    }
    for name in &schema.drop_cols {
        if name == &schema.target {
            return Err(Error::Config(format!("cannot drop the target column '{name}'")));
        }
        let i = find(name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
        kinds[i] = Column::Skip;
    }
    for name in &schema.categorical {
        let i = find(name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
        if matches!(kinds[i], Column::Numeric) {
            kinds[i] = Column::Categorical(HashMap::new());
        }
    }
    let names: Vec<String> = header
        .iter()
        .zip(&kinds)
        .filter(|(_, k)| matches!(k, Column::Numeric | Column::Categorical(_)))
        .map(|(h, _)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut stamps = schema.timestamp.as_ref().map(|_| Vec::new());
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(names.len());
        let mut stamp = None;
        let mut ok = true;
        for (field, kind) in record.iter().zip(kinds.iter_mut()) {
            match kind {
                Column::Timestamp => stamp = Some(field.to_owned()),
                Column::Skip => {}
                Column::Numeric => match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    _ => ok = false,
                },
                Column::Categorical(codes) => {
                    if field.is_empty() {
                        ok = false;
                    } else {
                        let next = codes.len() as f64;
                        row.push(*codes.entry(field.to_owned()).or_insert(next));
                    }
                }
            }
        }
        if !ok {
            dropped += 1;
            continue;
        }
        rows.push(row);
        if let (Some(s), Some(v)) = (stamps.as_mut(), stamp) {
            s.push(v);
        }
    }
    let mut table = RawTable::new(names, rows, &schema.target)?;
    table.timestamps = stamps;
    table.dropped_rows = dropped;
    Ok(table)
}

/// Writes a table with a header row; values use the shortest exact decimal.
pub fn write_table(path: &Path, names: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(names).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string)).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}
