use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

/// Everything needed to re-run a command and check its output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub command_line: Vec<String>,
    /// Every setting after defaults and config-file values were applied.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)
    }
}

/// `results.csv` → `results.csv.manifest.json`.
pub fn path_for(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn unix_millis() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}
