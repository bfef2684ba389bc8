//! Datasets and their CSV/JSON serialization.

use std::io::Write;

use serde_json::{Map, Value};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

/// A table with named columns plus metadata that travels as header comments
/// (CSV) or the `meta` object (JSON).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Key/value pairs, emitted in order as CSV header comments.
    pub meta: Vec<(String, Value)>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Dataset {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            meta: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Value>) {
        self.meta.push((key.to_string(), value.into()));
    }

    pub fn warn(&mut self, w: impl ToString) {
        let w = w.to_string();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }
}

/// Formats with `digits` significant digits in exponent notation.
pub fn format_number(v: f64, digits: usize) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{:.*e}", digits - 1, v)
    }
}

fn cell_text(c: &Cell, digits: usize) -> String {
    match c {
        Cell::Num(v) => format_number(*v, digits),
        Cell::Int(i) => i.to_string(),
        Cell::Text(t) => t.clone(),
    }
}

fn cell_json(c: &Cell, digits: usize) -> Value {
    match c {
        Cell::Num(v) if v.is_finite() => {
            let rounded: f64 = format_number(*v, digits).parse().expect("formatted number parses");
            serde_json::Number::from_f64(rounded).map(Value::Number).unwrap_or(Value::Null)
        }
        Cell::Num(_) => Value::Null,
        Cell::Int(i) => Value::from(*i),
        Cell::Text(t) => Value::from(t.as_str()),
    }
}

/// Provenance stamped on every dataset.
pub struct Stamp<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: &'a str,
    pub config: Value,
}

pub fn write<W: Write>(ds: &Dataset, stamp: &Stamp, format: Format, digits: usize, mut out: W) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "# dephaso {} {}", stamp.version, stamp.command)?;
            writeln!(out, "# config-sha256 {}", stamp.config_hash)?;
            for (k, v) in &ds.meta {
                writeln!(out, "# {k} {v}")?;
            }
            for w in &ds.warnings {
                writeln!(out, "# warning {w}")?;
            }
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&ds.columns)?;
            for row in &ds.rows {
                w.write_record(row.iter().map(|c| cell_text(c, digits)))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let records: Vec<Value> = ds
                .rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> =
                        ds.columns.iter().cloned().zip(row.iter().map(|c| cell_json(c, digits))).collect();
                    Value::Object(obj)
                })
                .collect();
            let mut meta = Map::new();
            meta.insert("toolkit".into(), "dephaso".into());
            meta.insert("version".into(), stamp.version.into());
            meta.insert("command".into(), stamp.command.into());
            meta.insert("config_sha256".into(), stamp.config_hash.into());
            meta.insert("columns".into(), ds.columns.clone().into());
            for (k, v) in &ds.meta {
                meta.insert(k.clone(), v.clone());
            }
            meta.insert("warnings".into(), ds.warnings.clone().into());
            meta.insert("config".into(), stamp.config.clone());
            let mut doc = Map::new();
            doc.insert("records".into(), Value::Array(records));
            doc.insert("meta".into(), Value::Object(meta));
            serde_json::to_writer_pretty(&mut out, &Value::Object(doc))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_number(std::f64::consts::PI, 9), "3.14159265e0");
        assert_eq!(format_number(-1.0e-20, 9), "-1.00000000e-20");
        assert_eq!(format_number(0.0, 9), "0");
    }

    #[test]
    fn json_has_records_and_meta() {
        let mut ds = Dataset::new(["a", "b"]);
        ds.push(vec![Cell::Num(1.0 / 3.0), Cell::Int(4)]);
        ds.meta("lambda", 2.5);
        let stamp = Stamp { command: "x", version: "0", config_hash: "h", config: Value::Null };
        let mut buf = Vec::new();
        write(&ds, &stamp, Format::Json, 9, &mut buf).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["records"][0]["b"], 4);
        assert_eq!(v["records"][0]["a"], 0.333333333);
        assert_eq!(v["meta"]["lambda"], 2.5);
        assert_eq!(v["meta"]["config_sha256"], "h");
    }

    #[test]
    fn csv_has_header_comments() {
        let mut ds = Dataset::new(["a"]);
        ds.push(vec![Cell::Num(2.0)]);
        ds.warn("something");
        let stamp = Stamp { command: "x", version: "1.2", config_hash: "abc", config: Value::Null };
        let mut buf = Vec::new();
        write(&ds, &stamp, Format::Csv, 9, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "# dephaso 1.2 x\n# config-sha256 abc\n# warning something\na\n2.00000000e0\n");
    }
}
