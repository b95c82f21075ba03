//! CSV and JSON artifacts with provenance.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{OutputFormat, RunConfig};
use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Decimal rendering with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000000000".into();
    }
    let sci = format!("{:.11e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific form");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let mut out = String::new();
    if x < 0.0 {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            out.push_str(&digits);
            out.extend(std::iter::repeat_n('0', int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => fmt_sig(*x),
            Cell::Text(t) => {
                if t.contains([',', '"', '\n']) {
                    format!("\"{}\"", t.replace('"', "\"\""))
                } else {
                    t.clone()
                }
            }
        }
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

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

/// Named columns of equal length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `# key: value` lines after the provenance block.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<(String, String)>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.push((key.into(), value.into()));
    }

    /// Column by name, as floats where numeric.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[i] {
                    Cell::Int(v) => *v as f64,
                    Cell::Num(v) => *v,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Where an artifact came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Resolved configuration as JSON.
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, config: Option<&RunConfig>, seed: u64) -> Result<Self> {
        let (hash, json) = match config {
            Some(cfg) => {
                let toml = cfg.to_toml()?;
                let hash = hex::encode(Sha256::digest(toml.as_bytes()));
                let json = serde_json::to_value(cfg.to_file())
                    .map_err(|e| Error::Io(e.to_string()))?;
                (hash, json)
            }
            None => (hex::encode(Sha256::digest(b"")), serde_json::Value::Null),
        };
        Ok(Self {
            tool: TOOL_VERSION.into(),
            command: command.into(),
            seed,
            config_sha256: hash,
            config: json,
        })
    }

    fn header(&self) -> String {
        format!(
            "# tool: {}\n# command: {}\n# seed: {}\n# config_sha256: {}\n# config: {}\n",
            self.tool, self.command, self.seed, self.config_sha256, self.config
        )
    }
}

pub fn render_csv(table: &Table, prov: &Provenance) -> String {
    let mut out = prov.header();
    for (k, v) in &table.notes {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn render_json(tables: &[Table], prov: &Provenance) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        provenance: &'a Provenance,
        tables: &'a [Table],
    }
    let mut s = serde_json::to_string_pretty(&Doc {
        provenance: prov,
        tables,
    })
    .map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

/// Writes `tables` under `dir`: one CSV per table, or a single JSON file
/// named after the command. Returns the written paths.
pub fn write_tables(
    dir: &Path,
    stem: &str,
    tables: &[Table],
    prov: &Provenance,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    match format {
        OutputFormat::Csv => tables
            .iter()
            .map(|t| {
                let path = dir.join(format!("{}.csv", t.name));
                write_atomic(&path, &render_csv(t, prov))?;
                Ok(path)
            })
            .collect(),
        OutputFormat::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_atomic(&path, &render_json(tables, prov)?)?;
            Ok(vec![path])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(0.544), "0.544000000000");
        assert_eq!(fmt_sig(263.0), "263.000000000");
        assert_eq!(fmt_sig(1e-9), "0.00000000100000000000");
        assert_eq!(fmt_sig(-2.5), "-2.50000000000");
        assert_eq!(fmt_sig(1e13), "10000000000000");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(0.0), "0.00000000000");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new("demo", &["N", "M"]);
        t.push(vec![1usize.into(), 1.0.into()]);
        t.push(vec![2usize.into(), "a,b".into()]);
        let prov = Provenance::new("demo", None, 3).unwrap();
        let csv = render_csv(&t, &prov);
        assert!(csv.starts_with("# tool: ionmux"));
        assert!(csv.ends_with("N,M\n1,1.00000000000\n2,\"a,b\"\n"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, "one\n").unwrap();
        write_atomic(&p, "two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
