use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use incidence_lab::io::family_digest;
use incidence_lab::sets::{DyadicIndex, Family};

/// Where a command sends its artifacts.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
        }
        Ok(Sink {
            dir: dir.map(Path::to_path_buf),
        })
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    /// Writes `name` into the output directory; a no-op without one.
    pub fn file(&self, name: &str, body: &str) -> Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(name);
            fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }

    /// The main report: `report.json` in the output directory, else stdout.
    pub fn report(&self, report: &Value) -> Result<()> {
        let mut body = serde_json::to_string_pretty(report)?;
        body.push('\n');
        match &self.dir {
            Some(_) => self.file("report.json", &body),
            None => {
                print!("{body}");
                Ok(())
            }
        }
    }
}

/// A named input family and its content digest.
pub fn input<C: DyadicIndex>(role: &str, path: &Path, f: &Family<C>) -> Value {
    json!({
        "role": role,
        "path": path.display().to_string(),
        "kind": f.kind().as_str(),
        "m": f.m(),
        "size": f.len(),
        "digest": family_digest(f),
    })
}

/// Wraps a result with the tool version, resolved parameters and input digests.
pub fn envelope(command: &str, params: Value, inputs: Vec<Value>, result: Value) -> Value {
    json!({
        "tool": "incidence-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "params": params,
        "inputs": inputs,
        "result": result,
    })
}
