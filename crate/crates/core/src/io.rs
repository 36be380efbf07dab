//! Dataset files: CSV with a header row, or a JSON array of records.
//!
//! Recognised columns are `time`, `event`, `w`, `area` (optional) and
//! `x_true` (optional). Every other column is an error-free covariate, kept
//! in file order.

use std::io::{Read, Write};

use serde_json::{Map, Number, Value};

use crate::data::{validate_dataset, RawDataset, SurvivalDataset};
use crate::error::{Error, Result};

const REQUIRED: [&str; 3] = ["time", "event", "w"];
const OPTIONAL: [&str; 2] = ["area", "x_true"];

fn is_reserved(name: &str) -> bool {
    REQUIRED.contains(&name) || OPTIONAL.contains(&name)
}

fn check_header(names: &[String]) -> Result<()> {
    for required in REQUIRED {
        if !names.iter().any(|n| n == required) {
            return Err(Error::MissingColumn(required.to_string()));
        }
    }
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(Error::Parse(format!("duplicate column `{name}`")));
        }
    }
    Ok(())
}

/// Row-major table of named numeric columns.
struct Table {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    fn into_raw(self) -> RawDataset {
        let cov: Vec<usize> = (0..self.names.len())
            .filter(|&j| !is_reserved(&self.names[j]))
            .collect();
        RawDataset {
            time: self.column("time").unwrap_or_default(),
            event: self.column("event").unwrap_or_default(),
            w: self.column("w").unwrap_or_default(),
            area: self.column("area"),
            x_true: self.column("x_true"),
            z: self.rows.iter().map(|r| cov.iter().map(|&j| r[j]).collect()).collect(),
            z_names: cov.iter().map(|&j| self.names[j].clone()).collect(),
        }
    }
}

fn parse_cell(text: &str, column: &str, row: usize) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("row {}, column `{column}`: `{text}` is not a number", row + 1)))
}

/// Reads and validates a CSV dataset.
pub fn read_csv<R: Read>(input: R) -> Result<SurvivalDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    check_header(&names)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .zip(&names)
            .map(|(cell, name)| parse_cell(cell, name, i))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    validate_dataset(Table { names, rows }.into_raw())
}

/// Reads and validates a JSON array of records with the same keys as the
/// CSV columns. Covariate order follows the first record.
pub fn read_json<R: Read>(input: R) -> Result<SurvivalDataset> {
    let value: Value = serde_json::from_reader(input)?;
    let records = value
        .as_array()
        .ok_or_else(|| Error::Parse("expected a JSON array of records".into()))?;
    let names: Vec<String> = match records.first() {
        Some(Value::Object(first)) => first.keys().cloned().collect(),
        Some(_) => return Err(Error::Parse("record 1 is not an object".into())),
        None => REQUIRED.iter().map(|s| s.to_string()).collect(),
    };
    check_header(&names)?;
    let mut rows = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let obj = record
            .as_object()
            .ok_or_else(|| Error::Parse(format!("record {} is not an object", i + 1)))?;
        if obj.len() != names.len() {
            return Err(Error::Parse(format!("record {} has different keys from record 1", i + 1)));
        }
        let row = names
            .iter()
            .map(|name| match obj.get(name).and_then(Value::as_f64) {
                Some(v) => Ok(v),
                None => Err(Error::Parse(format!(
                    "record {}: key `{name}` is missing or not a number",
                    i + 1
                ))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    validate_dataset(Table { names, rows }.into_raw())
}

fn header(data: &SurvivalDataset) -> Vec<String> {
    let mut names: Vec<String> = ["time", "event", "w", "area"].iter().map(|s| s.to_string()).collect();
    names.extend(data.z_names().iter().cloned());
    if data.x_true().is_some() {
        names.push("x_true".into());
    }
    names
}

fn record(data: &SurvivalDataset, i: usize) -> Vec<f64> {
    let mut row = vec![
        data.u()[i],
        if data.delta()[i] { 1.0 } else { 0.0 },
        data.w()[i] as f64,
        data.area()[i],
    ];
    row.extend(data.z().row(i).iter().copied());
    if let Some(x) = data.x_true() {
        row.push(x[i]);
    }
    row
}

/// Writes a dataset as CSV. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv<W: Write>(data: &SurvivalDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(data))?;
    for i in 0..data.n() {
        w.write_record(record(data, i).iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a dataset as a JSON array of records.
pub fn write_json<W: Write>(data: &SurvivalDataset, out: W) -> Result<()> {
    let names = header(data);
    let records: Vec<Value> = (0..data.n())
        .map(|i| {
            let mut obj = Map::new();
            for (name, v) in names.iter().zip(record(data, i)) {
                let num = if matches!(name.as_str(), "event" | "w") {
                    Number::from(v as u64)
                } else {
                    Number::from_f64(v).expect("validated values are finite")
                };
                obj.insert(name.clone(), Value::Number(num));
            }
            Value::Object(obj)
        })
        .collect();
    serde_json::to_writer_pretty(out, &Value::Array(records))?;
    Ok(())
}
