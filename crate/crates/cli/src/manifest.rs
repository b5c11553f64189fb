use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce an output: subcommand, flags, seed,
/// input digests and tool version. The worker count is left out on purpose
/// since outputs do not depend on it.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub flags: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
}

impl RunManifest {
    pub fn new(subcommand: &str, flags: &impl Serialize, seed: Option<u64>) -> Self {
        Self {
            tool: "saferec",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            flags: serde_json::to_value(flags).unwrap_or(Value::Null),
            seed,
            inputs: Vec::new(),
        }
    }

    /// Reads an input file and records its digest.
    pub fn read(&mut self, path: &Path) -> io::Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        let hex = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: hex });
        Ok(bytes)
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> io::Result<()> {
    match out {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

pub fn write_json(out: Option<&PathBuf>, manifest: &RunManifest, result: &impl Serialize) -> io::Result<()> {
    let doc = json!({ "manifest": manifest, "result": result });
    let mut text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
    text.push('\n');
    emit(out, &text)
}

/// CSV with the manifest on a leading comment line.
pub fn write_csv(out: Option<&PathBuf>, manifest: &RunManifest, body: &str) -> io::Result<()> {
    let head = serde_json::to_string(manifest).map_err(io::Error::other)?;
    emit(out, &format!("# manifest {head}\n{body}"))
}

/// JSON lines keep their one-record-per-line shape; the manifest goes to a
/// sidecar `<out>.manifest.json`.
pub fn write_jsonl(out: Option<&PathBuf>, manifest: &RunManifest, body: &str) -> io::Result<()> {
    emit(out, body)?;
    if let Some(p) = out {
        let mut side = p.clone().into_os_string();
        side.push(".manifest.json");
        let mut text = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(PathBuf::from(side), text)?;
    }
    Ok(())
}
