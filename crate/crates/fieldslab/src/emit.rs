//! Table output: CSV or JSON files plus `meta.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Null, Cell::Float)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

macro_rules! int_cell {
    ($($t:ty),*) => {$(
        impl From<$t> for Cell {
            fn from(v: $t) -> Self {
                Cell::Int(v as i64)
            }
        }
    )*};
}
int_cell!(i32, u32, i64, usize, u64);

/// `17` significant digits, enough to round-trip every `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Float value of `column` in `row`, if present.
    pub fn float(&self, row: usize, column: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.column(column)?)? {
            Cell::Float(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn text(&self, row: usize, column: &str) -> Option<&str> {
        match self.rows.get(row)?.get(self.column(column)?)? {
            Cell::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn flag(&self, row: usize, column: &str) -> Option<bool> {
        match self.rows.get(row)?.get(self.column(column)?)? {
            Cell::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Str(s) => s.clone(),
                Cell::Int(v) => v.to_string(),
                Cell::Float(v) => format_float(*v),
                Cell::Bool(b) => b.to_string(),
                Cell::Null => String::new(),
            }))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn to_json(&self) -> String {
        let quote = |s: &str| serde_json::to_string(s).expect("strings serialize");
        let mut out = String::new();
        let _ = write!(out, "{{\n  \"table\": {},\n  \"columns\": [", quote(&self.name));
        out.push_str(&self.columns.iter().map(|c| quote(c)).collect::<Vec<_>>().join(", "));
        out.push_str("],\n  \"records\": [");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(if i == 0 { "\n    {" } else { ",\n    {" });
            for (j, (col, cell)) in self.columns.iter().zip(row).enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                let v = match cell {
                    Cell::Str(s) => quote(s),
                    Cell::Int(v) => v.to_string(),
                    Cell::Float(v) if v.is_finite() => format_float(*v),
                    Cell::Float(v) => quote(&format_float(*v)),
                    Cell::Bool(b) => b.to_string(),
                    Cell::Null => "null".into(),
                };
                let _ = write!(out, "{}: {}", quote(col), v);
            }
            out.push('}');
        }
        out.push_str(if self.rows.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        out
    }

    /// Parses the output of [`Table::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let name = v["table"].as_str().context("missing table name")?.to_string();
        let columns: Vec<String> = v["columns"]
            .as_array()
            .context("missing columns")?
            .iter()
            .map(|c| c.as_str().map(str::to_string).context("column names are strings"))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for rec in v["records"].as_array().context("missing records")? {
            let row = columns
                .iter()
                .map(|c| {
                    Ok(match &rec[c] {
                        Value::Null => Cell::Null,
                        Value::Bool(b) => Cell::Bool(*b),
                        Value::String(s) => match s.as_str() {
                            "NaN" => Cell::Float(f64::NAN),
                            "inf" => Cell::Float(f64::INFINITY),
                            "-inf" => Cell::Float(f64::NEG_INFINITY),
                            _ => Cell::Str(s.clone()),
                        },
                        Value::Number(n) if n.is_f64() => Cell::Float(n.as_f64().expect("f64")),
                        Value::Number(n) => Cell::Int(n.as_i64().context("integer out of range")?),
                        other => bail!("unexpected value {other}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { name, columns, rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config_hash: String,
    pub format: Format,
    pub tables: Vec<String>,
    pub passed: Option<bool>,
    pub config: Value,
}

/// Writes one file per table and `meta.json` into `dir`.
pub fn emit(dir: &Path, tables: &[Table], format: Format, meta: &Meta) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    for t in tables {
        ensure!(!t.name.is_empty() && !t.name.contains(['/', '\\']), "invalid table name {:?}", t.name);
        let path = dir.join(format!("{}.{}", t.name, format.extension()));
        let body = match format {
            Format::Csv => t.to_csv()?,
            Format::Json => t.to_json(),
        };
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    let path = dir.join("meta.json");
    std::fs::write(&path, serde_json::to_string_pretty(meta)? + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new("demo", &["name", "n", "x", "ok", "target"]);
        t.push(vec!["a,b".into(), 3usize.into(), 0.1f64.into(), true.into(), Cell::Null]);
        t.push(vec!["\"q\"".into(), (-2i64).into(), (1.0f64 / 3.0).into(), false.into(), Some(-0.0).into()]);
        t.push(vec!["nan".into(), 0usize.into(), f64::NAN.into(), true.into(), Some(f64::INFINITY).into()]);
        t
    }

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(1.0 / 3.0), "3.3333333333333331e-1");
        for v in [0.1, 1.0 / 3.0, 6.02e23, -1e-300, f64::MIN_POSITIVE, 5e-324] {
            assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let t = sample();
        let back = Table::from_json(&t.to_json()).unwrap();
        assert_eq!(back.name, t.name);
        assert_eq!(back.columns, t.columns);
        for (a, b) in t.rows.iter().zip(&back.rows) {
            for (x, y) in a.iter().zip(b) {
                match (x, y) {
                    (Cell::Float(p), Cell::Float(q)) => assert!(p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan())),
                    _ => assert_eq!(x, y),
                }
            }
        }
    }

    #[test]
    fn csv_has_fixed_width() {
        let csv = sample().to_csv().unwrap();
        let mut r = csv::Reader::from_reader(csv.as_bytes());
        assert_eq!(r.headers().unwrap().len(), 5);
        for rec in r.records() {
            assert_eq!(rec.unwrap().len(), 5);
        }
    }

    #[test]
    #[should_panic]
    fn ragged_rows_are_rejected() {
        Table::new("t", &["a", "b"]).push(vec![1usize.into()]);
    }
}
