//! Emitted files: CSVs start with a `#` preamble echoing the version and the
//! full resolved config; each run also writes `<subcommand>.json` listing its
//! outputs and headline numbers.

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use skeleton_control::io::write_preamble;
use std::path::PathBuf;

pub struct Run {
    dir: PathBuf,
    subcommand: &'static str,
    config: Value,
    outputs: Vec<String>,
    pub summary: Map<String, Value>,
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        Value::Null => {}
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

impl Run {
    pub fn new(dir: PathBuf, subcommand: &'static str, config: Value) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            subcommand,
            config,
            outputs: Vec::new(),
            summary: Map::new(),
        })
    }

    /// Record the subcommand's resolved arguments in the config echo.
    pub fn resolved<T: serde::Serialize>(&mut self, args: &T) -> Result<()> {
        if let Value::Object(m) = &mut self.config {
            m.insert(self.subcommand.to_string(), serde_json::to_value(args)?);
        }
        Ok(())
    }

    fn preamble(&self) -> Vec<(String, String)> {
        let mut entries = vec![("subcommand".to_string(), self.subcommand.to_string())];
        flatten("", &self.config, &mut entries);
        entries
    }

    /// Write `name` as preamble, header line, then `rows` (one per line).
    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
        let mut buf = Vec::new();
        write_preamble(&mut buf, "skctl", &self.preamble())?;
        buf.extend_from_slice(header.as_bytes());
        buf.push(b'\n');
        for r in rows {
            buf.extend_from_slice(r.as_bytes());
            buf.push(b'\n');
        }
        self.bytes(name, &buf)
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let sidecar = json!({
            "tool": "skctl",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "config": self.config,
            "outputs": self.outputs,
            "summary": self.summary,
        });
        let path = self.dir.join(format!("{}.json", self.subcommand));
        let mut text = serde_json::to_string_pretty(&sidecar)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
