//! Self-describing CSV and JSON artifacts.
//!
//! Every file starts with a metadata block: `#!` lines echo the full config
//! (the file can be passed back via `--config`), `#` lines carry the rest.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Self::Num(v) => v.to_string(),
            Self::Int(v) => v.to_string(),
            Self::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Self::Num(v) => json!(v),
            Self::Int(v) => json!(v),
            Self::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Num(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Self::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

/// One output table with a mandatory header row.
#[derive(Debug, Clone)]
pub struct Table {
    /// File stem, e.g. `evolve` or `macro_traces`.
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `key=value` metadata specific to this table.
    pub notes: Vec<(String, String)>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self { name: name.to_string(), columns: columns.to_vec(), rows: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }
}

pub struct Writer<'a> {
    pub config: &'a RunConfig,
    pub started: Instant,
}

impl Writer<'_> {
    fn header(&self, table: &Table) -> String {
        let mut h = String::new();
        h.push_str(&format!("# ssep {} {}\n", env!("CARGO_PKG_VERSION"), self.config.subcommand.name()));
        for (k, v) in self.config.echo() {
            h.push_str(&format!("#! {k}={v}\n"));
        }
        for (k, v) in &table.notes {
            h.push_str(&format!("# {k}={v}\n"));
        }
        h.push_str(&format!("# timestamp={} wall_time_s={:.3}\n", unix_now(), self.started.elapsed().as_secs_f64()));
        h
    }

    /// Writes the table in the configured format(s) and returns the paths.
    pub fn write(&self, table: &Table) -> Result<Vec<PathBuf>, CliError> {
        let dir = &self.config.out_dir;
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        let mut paths = Vec::new();
        if matches!(self.config.format, Format::Csv | Format::Both) {
            let path = dir.join(format!("{}.csv", table.name));
            let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
            out.write_all(self.header(table).as_bytes())?;
            writeln!(out, "{}", table.columns.join(","))?;
            for row in &table.rows {
                let line: Vec<String> = row.iter().map(Cell::csv).collect();
                writeln!(out, "{}", line.join(","))?;
            }
            out.flush()?;
            paths.push(path);
        }
        if matches!(self.config.format, Format::Json | Format::Both) {
            let path = dir.join(format!("{}.json", table.name));
            let config: Map<String, Value> = self.config.echo().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
            let notes: Map<String, Value> = table.notes.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            let doc = json!({
                "metadata": {
                    "version": env!("CARGO_PKG_VERSION"),
                    "subcommand": self.config.subcommand.name(),
                    "config": config,
                    "notes": notes,
                    "timestamp": unix_now(),
                    "wall_time_s": self.started.elapsed().as_secs_f64(),
                },
                "columns": table.columns,
                "rows": table.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
            });
            fs::write(&path, serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}
