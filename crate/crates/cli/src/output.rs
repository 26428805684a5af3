//! CSV and JSONL emission. Every file starts with a manifest (a `# manifest:`
//! comment line in CSV, a `{"manifest": ...}` object in JSONL) that pins the
//! inputs; files with equal manifests have equal contents.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: &'static str,
    pub scenario_sha256: Option<String>,
    pub seed: u64,
    pub trials: Option<usize>,
    /// Effective overrides, in a fixed order.
    pub settings: Vec<(String, String)>,
}

impl Manifest {
    pub fn line(&self) -> String {
        let mut s = format!(
            "# manifest: tool=nc-toolkit version={TOOL_VERSION} command={} scenario_sha256={} seed={}",
            self.command,
            self.scenario_sha256.as_deref().unwrap_or("none"),
            self.seed,
        );
        if let Some(t) = self.trials {
            s.push_str(&format!(" trials={t}"));
        }
        for (k, v) in &self.settings {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }
}

/// Writes a JSONL file whose first object is `{"manifest": ...}`.
pub fn write_jsonl<F>(dir: &Path, name: &str, manifest: &Manifest, body: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let path = dir.join(name);
    let err = |e| CliError::io(format!("writing {}", path.display()), e);
    let file = File::create(&path).map_err(err)?;
    let mut out = BufWriter::new(file);
    let header = serde_json::json!({ "manifest": manifest.line().trim_start_matches("# manifest: ") });
    writeln!(out, "{header}").map_err(err)?;
    body(&mut out).map_err(err)?;
    out.flush().map_err(err)?;
    Ok(path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

pub fn write_csv<T: Serialize>(dir: &Path, name: &str, manifest: &Manifest, rows: &[T]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", manifest.line()).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(path)
}
