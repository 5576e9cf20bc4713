//! Artifact writers. Every file carries a metadata header with the config hash.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::Format;

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub command: String,
}

pub struct Writer {
    pub dir: PathBuf,
    pub format: Format,
    pub meta: Meta,
    pub written: Vec<PathBuf>,
}

fn created_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Parse CSV text into JSON records, numbers where they parse.
pub fn csv_to_records(csv: &str) -> Value {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let Some(head) = lines.next() else {
        return Value::Array(vec![]);
    };
    let cols: Vec<&str> = head.split(',').collect();
    let rows = lines
        .map(|line| {
            let mut obj = Map::new();
            for (c, v) in cols.iter().zip(line.split(',')) {
                let val = match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => json!(x),
                    _ => json!(v),
                };
                obj.insert((*c).to_string(), val);
            }
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

impl Writer {
    pub fn new(dir: &Path, format: Format, meta: Meta) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), format, meta, written: vec![] })
    }

    fn header_line(&self) -> String {
        format!(
            "# {} {} config_sha256={} seed={} command={}",
            self.meta.tool, self.meta.version, self.meta.config_sha256, self.meta.seed, self.meta.command
        )
    }

    fn put(&mut self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// A table given as CSV text, written in the selected format.
    pub fn table(&mut self, stem: &str, csv: &str) -> anyhow::Result<PathBuf> {
        match self.format {
            Format::Csv => {
                let text = format!("# created_unix={}\n{}\n{}", created_unix(), self.header_line(), csv);
                self.put(&format!("{stem}.csv"), &text)
            }
            Format::Json => self.json(stem, &csv_to_records(csv)),
        }
    }

    /// A JSON document wrapped with the metadata block.
    pub fn json(&mut self, stem: &str, data: &Value) -> anyhow::Result<PathBuf> {
        let mut meta = serde_json::to_value(&self.meta)?;
        meta["created_unix"] = json!(created_unix());
        let doc = json!({ "meta": meta, "data": data });
        self.put(&format!("{stem}.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))
    }

    /// Free-form text (run-length regions) behind the metadata header.
    pub fn text(&mut self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        let text = format!("# created_unix={}\n{}\n{}", created_unix(), self.header_line(), body);
        self.put(name, &text)
    }
}
