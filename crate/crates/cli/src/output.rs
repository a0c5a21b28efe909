//! CSV and JSON emission. Every file starts with the provenance block, and
//! nothing time- or host-dependent is written, so identical inputs give
//! byte-identical outputs.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

pub const TOOL: &str = "supercrit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Fully resolved configuration, defaults included.
    pub config: Value,
}

impl Provenance {
    pub fn new(command: &str, config: Value) -> Self {
        Provenance { tool: TOOL, version: VERSION, command: command.to_string(), config }
    }
}

/// 17 significant digits; non-finite values as `inf`, `-inf`, `nan`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(prov: &Provenance, columns: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "# {} {}", prov.tool, prov.version);
        let _ = writeln!(text, "# command: {}", prov.command);
        let _ = writeln!(text, "# config: {}", serde_json::to_string(&prov.config).unwrap_or_default());
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// `{"provenance": ..., <result fields>}`.
pub fn json_doc<T: Serialize>(prov: &Provenance, result: &T) -> Result<String> {
    let mut doc = json!({ "provenance": prov });
    match serde_json::to_value(result)? {
        Value::Object(map) => {
            for (k, v) in map {
                doc[k] = v;
            }
        }
        other => doc["result"] = other,
    }
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

/// Destination for a command's outputs: files `PREFIX.csv` and
/// `PREFIX.json` when a prefix is set, otherwise standard output.
pub struct Sink {
    pub prefix: Option<PathBuf>,
}

impl Sink {
    /// Writes the outputs in order. Without a prefix only `primary` reaches
    /// standard output.
    pub fn emit(&self, csv: Option<String>, json: Option<String>, primary_is_json: bool) -> Result<()> {
        match &self.prefix {
            Some(p) => {
                if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
                }
                if let Some(c) = csv {
                    let path = with_ext(p, "csv");
                    std::fs::write(&path, c).with_context(|| format!("writing {}", path.display()))?;
                }
                if let Some(j) = json {
                    let path = with_ext(p, "json");
                    std::fs::write(&path, j).with_context(|| format!("writing {}", path.display()))?;
                }
            }
            None => {
                let out = if primary_is_json { json.or(csv) } else { csv.or(json) };
                if let Some(text) = out {
                    std::io::stdout().lock().write_all(text.as_bytes())?;
                }
            }
        }
        Ok(())
    }
}

fn with_ext(prefix: &std::path::Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2f64.sqrt() * 1e-300, 6.02214076e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn prefix_gets_extension() {
        assert_eq!(with_ext(std::path::Path::new("out/run.v1"), "csv"), PathBuf::from("out/run.v1.csv"));
    }
}
