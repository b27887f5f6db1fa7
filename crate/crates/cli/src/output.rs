//! Manifested CSV and JSON writers.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command, resolved parameters and results of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub params: BTreeMap<String, String>,
    pub results: BTreeMap<String, String>,
    /// Checksum of the data section.
    pub sha256: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: "psdc",
            version: VERSION,
            command: command.to_string(),
            params: BTreeMap::new(),
            results: BTreeMap::new(),
            sha256: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn result(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.results.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => json_num(*x),
            Cell::Int(n) => json!(n),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Non-finite values become `null`.
pub fn json_num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv_body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    fn to_json(&self) -> Value {
        json!({
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

/// One command's output: a table, plus an optional JSON form of the data.
#[derive(Debug, Clone)]
pub struct Report {
    pub manifest: RunManifest,
    pub table: Table,
    pub json: Option<Value>,
}

impl Report {
    pub fn new(manifest: RunManifest, table: Table) -> Self {
        Self {
            manifest,
            table,
            json: None,
        }
    }

    pub fn with_json(mut self, data: Value) -> Self {
        self.json = Some(data);
        self
    }

    pub fn render_csv(&self) -> String {
        let body = self.table.csv_body();
        let mut manifest = self.manifest.clone();
        manifest.sha256 = Some(sha256_hex(body.as_bytes()));
        let mut out = format!("# {} {}\n# command: {}\n", manifest.tool, manifest.version, manifest.command);
        for (k, v) in &manifest.params {
            out.push_str(&format!("# param {k} = {v}\n"));
        }
        for (k, v) in &manifest.results {
            out.push_str(&format!("# result {k} = {v}\n"));
        }
        out.push_str(&format!("# sha256 {}\n", manifest.sha256.as_deref().unwrap_or_default()));
        out + &body
    }

    pub fn render_json(&self) -> String {
        let data = self.json.clone().unwrap_or_else(|| self.table.to_json());
        let compact = serde_json::to_string(&data).expect("json data serializes");
        let mut manifest = self.manifest.clone();
        manifest.sha256 = Some(sha256_hex(compact.as_bytes()));
        let doc = json!({ "manifest": manifest, "data": data });
        serde_json::to_string_pretty(&doc).expect("json document serializes") + "\n"
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to `path`, or to standard output when `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Files written by a multi-file command, with their checksums.
#[derive(Debug, Default)]
pub struct FileSet {
    pub files: Vec<(PathBuf, String)>,
}

impl FileSet {
    pub fn write(&mut self, path: PathBuf, text: &str) -> Result<(), CliError> {
        write_file(&path, text)?;
        self.files.push((path, sha256_hex(text.as_bytes())));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut m = RunManifest::new("demo");
        m.param("m", 4).param("family", "radau-right");
        let mut t = Table::new(["x", "name", "n"]);
        t.push(vec![0.1.into(), "a".into(), 3usize.into()]);
        t.push(vec![f64::NAN.into(), "b".into(), 4usize.into()]);
        Report::new(m, t)
    }

    #[test]
    fn csv_has_manifest_header_and_fixed_digits() {
        let csv = sample().render_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], format!("# psdc {VERSION}"));
        assert_eq!(lines[1], "# command: demo");
        assert_eq!(lines[2], "# param family = radau-right");
        assert!(lines[4].starts_with("# sha256 "));
        assert_eq!(lines[5], "x,name,n");
        assert_eq!(lines[6], "1.0000000000000001e-1,a,3");
        assert_eq!(lines[7], "NaN,b,4");
        assert!(!csv.contains('\r'));
        let body = lines[5..].join("\n") + "\n";
        assert_eq!(lines[4], format!("# sha256 {}", sha256_hex(body.as_bytes())));
    }

    #[test]
    fn json_embeds_manifest_and_nulls_non_finite() {
        let doc: Value = serde_json::from_str(&sample().render_json()).unwrap();
        assert_eq!(doc["manifest"]["command"], "demo");
        assert_eq!(doc["manifest"]["params"]["m"], "4");
        assert_eq!(doc["data"]["rows"][0][0], 0.1);
        assert!(doc["data"]["rows"][1][0].is_null());
        assert_eq!(doc["manifest"]["sha256"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
