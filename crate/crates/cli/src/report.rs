//! Report rows and their CSV/JSON serialization.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    /// Floats carry 17 significant digits so they parse back to the same bits.
    pub fn to_csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(x) => json!(fmt_f64(*x)),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// Ordered key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Row(pub Vec<(String, Cell)>);

impl Row {
    pub fn new() -> Self {
        Row(Vec::new())
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<Cell>) -> &mut Self {
        self.0.push((key.into(), value.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.0.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<Map<_, _>>())
    }
}

/// A named table; `columns` is the union of row keys in order of first use
/// unless fixed up front.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn from_rows(rows: Vec<Row>) -> Self {
        Self::with_columns(Vec::new(), rows)
    }

    pub fn with_columns(mut columns: Vec<String>, rows: Vec<Row>) -> Self {
        for r in &rows {
            for (k, _) in &r.0 {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
        Table { columns, rows }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut out = format!("# schema_version={SCHEMA_VERSION}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let io = |e: csv::Error| CliError::Io(e.to_string());
            w.write_record(&self.columns).map_err(io)?;
            for r in &self.rows {
                let rec: Vec<String> =
                    self.columns.iter().map(|c| r.get(c).map_or(String::new(), Cell::to_csv)).collect();
                w.write_record(&rec).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        Ok(out)
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub command: String,
    pub main: Table,
    /// Extra tables written as `PREFIX_<name>.csv`.
    pub extras: Vec<(String, Table)>,
    /// Human-readable summary printed to stderr.
    pub text: Option<String>,
}

impl Report {
    pub fn summary_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "rows": self.main.rows.iter().map(Row::to_json).collect::<Vec<_>>(),
        })
    }

    /// Writes `PREFIX.csv`, `PREFIX.json` and the extra tables. All content is
    /// rendered before the first file is touched.
    pub fn write(&self, prefix: &Path) -> Result<Vec<PathBuf>, CliError> {
        let mut files = vec![(with_suffix(prefix, ".csv"), self.main.to_csv()?)];
        let mut json = serde_json::to_vec_pretty(&self.summary_json()).map_err(|e| CliError::Io(e.to_string()))?;
        json.push(b'\n');
        files.push((with_suffix(prefix, ".json"), json));
        for (name, table) in &self.extras {
            files.push((with_suffix(prefix, &format!("_{name}.csv")), table.to_csv()?));
        }
        for (path, bytes) in &files {
            write_atomic(path, bytes)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Temp file in the target directory, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    std::fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_csv_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.1 + 0.2] {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
        assert!(fmt_f64(f64::NAN).parse::<f64>().unwrap().is_nan());
        assert_eq!(fmt_f64(f64::INFINITY).parse::<f64>().unwrap(), f64::INFINITY);
    }

    #[test]
    fn seventeen_significant_digits() {
        let s = fmt_f64(0.5);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }

    #[test]
    fn columns_are_the_union_in_first_use_order() {
        let mut a = Row::new();
        a.push("x", 1.0).push("y", 2.0);
        let mut b = Row::new();
        b.push("z", "t").push("x", 3.0);
        let t = Table::from_rows(vec![a, b]);
        assert_eq!(t.columns, ["x", "y", "z"]);
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema_version=1");
        assert_eq!(lines[1], "x,y,z");
        assert!(lines[3].ends_with(",,t"));
    }
}
