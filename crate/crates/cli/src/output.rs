//! Tables, artifacts and the run manifest.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Str(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Str(v)
    }
}

/// Nine significant digits; plain notation for moderate magnitudes.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (_, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..15).contains(&exp) {
        return sci;
    }
    let decimals = (8 - exp).max(0) as usize;
    let plain = format!("{v:.decimals$}");
    if plain.contains('.') {
        plain.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        plain
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Str(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Float(v) if v.is_finite() => (*v).into(),
            Cell::Float(v) => format_float(*v).into(),
            Cell::Str(s) => s.clone().into(),
            Cell::Bool(b) => (*b).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match header in {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn to_json(&self) -> Vec<u8> {
        let rows: Vec<serde_json::Map<String, serde_json::Value>> =
            self.rows.iter().map(|r| self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect()).collect();
        let doc = serde_json::json!({ "schema_version": SCHEMA_VERSION, "table": self.name, "rows": rows });
        let mut out = serde_json::to_vec_pretty(&doc).expect("json values serialize");
        out.push(b'\n');
        out
    }

    /// Looks up a column by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
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

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Artifact {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        Artifact { name: name.into(), bytes }
    }
}

/// What a scenario produced before rendering.
#[derive(Debug, Default)]
pub struct Outputs {
    pub tables: Vec<Table>,
    pub files: Vec<Artifact>,
}

impl Outputs {
    pub fn render(&self, format: Format) -> Vec<Artifact> {
        let mut out: Vec<Artifact> = self
            .tables
            .iter()
            .map(|t| Artifact {
                name: format!("{}.{}", t.name, format.extension()),
                bytes: match format {
                    Format::Csv => t.to_csv(),
                    Format::Json => t.to_json(),
                },
            })
            .collect();
        out.extend(self.files.iter().cloned());
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputChecksum {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub scenario: String,
    /// SHA-256 of the effective config, defaults filled in.
    pub config_hash: String,
    pub seed: u64,
    pub outputs: Vec<OutputChecksum>,
}

impl RunManifest {
    pub fn new(scenario: &str, config_hash: String, seed: u64, artifacts: &[Artifact]) -> RunManifest {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: scenario.into(),
            config_hash,
            seed,
            outputs: artifacts
                .iter()
                .map(|a| OutputChecksum { name: a.name.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() })
                .collect(),
        }
    }
}

pub fn write_artifacts(dir: &std::path::Path, artifacts: &[Artifact], manifest: &RunManifest) -> Result<(), CliError> {
    let io = |path: &std::path::Path| {
        let path = path.display().to_string();
        move |source| CliError::IoFailure { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(io(&path))?;
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, Artifact::json("manifest.json", manifest).bytes).map_err(io(&path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_float(0.818181818181818), "0.818181818");
        assert_eq!(format_float(20.0), "20");
        assert_eq!(format_float(-1.5), "-1.5");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333");
        assert_eq!(format_float(123456789.123), "123456789");
        assert_eq!(format_float(1e-9), "1.00000000e-9");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_quotes_and_header() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["x,y".into(), 0.5.into()]);
        assert_eq!(String::from_utf8(t.to_csv()).unwrap(), "a,b\n\"x,y\",0.5\n");
        let json: serde_json::Value = serde_json::from_slice(&t.to_json()).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["rows"][0]["b"], 0.5);
    }
}
