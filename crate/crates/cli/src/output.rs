//! Tables written as CSV or JSON lines, each headed by the full configuration.
//!
//! A CSV file starts with one `# {json}` comment line; a JSONL file starts
//! with a `{"header": …}` object. Rows are flat serializable structs. Nothing
//! time-dependent is written, so equal configurations give equal bytes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::{Format, OUT_DIR_ENV};

pub struct Table {
    header: Value,
    rows: Vec<Map<String, Value>>,
}

impl Table {
    /// A table whose header records `command`, the tool version and `config`.
    pub fn new(command: &str, config: &impl Serialize) -> anyhow::Result<Table> {
        Ok(Table {
            header: json!({
                "tool": "tree-oram",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "config": serde_json::to_value(config)?,
            }),
            rows: Vec::new(),
        })
    }

    pub fn push(&mut self, row: &impl Serialize) -> anyhow::Result<()> {
        match serde_json::to_value(row)? {
            Value::Object(m) => self.rows.push(m),
            other => anyhow::bail!("table rows must be objects, got {other}"),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self, format: Format) -> anyhow::Result<Vec<u8>> {
        match format {
            Format::Jsonl => {
                let mut out = Vec::new();
                serde_json::to_writer(&mut out, &json!({ "header": self.header }))?;
                out.push(b'\n');
                for row in &self.rows {
                    serde_json::to_writer(&mut out, row)?;
                    out.push(b'\n');
                }
                Ok(out)
            }
            Format::Csv => {
                let mut out = format!("# {}\n", self.header).into_bytes();
                let mut w = csv::Writer::from_writer(&mut out);
                if let Some(first) = self.rows.first() {
                    w.write_record(first.keys())?;
                }
                for row in &self.rows {
                    w.write_record(row.values().map(cell))?;
                }
                w.flush()?;
                drop(w);
                Ok(out)
            }
        }
    }

    /// Writes to `path`, or to stdout when `path` is `None`.
    pub fn write(&self, path: Option<&Path>, format: Format) -> anyhow::Result<()> {
        let bytes = self.render(format)?;
        match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)
                        .with_context(|| format!("creating {}", dir.display()))?;
                }
                fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))
            }
            None => Ok(io::stdout().lock().write_all(&bytes)?),
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// The output directory: an explicit one, else `$TREE_ORAM_OUT_DIR`.
pub fn out_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}
