use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// Written next to every output; `argv` re-runs the command.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Value) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            argv: std::env::args().collect(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seeds.push(s);
        self
    }

    /// `dir/manifest.json` for a directory output, `<file name>.manifest.json`
    /// beside a file output.
    pub fn path_for(output: &Path) -> PathBuf {
        if output.is_dir() {
            return output.join("manifest.json");
        }
        let name = output.file_name().unwrap_or_default().to_string_lossy();
        output.with_file_name(format!("{name}.manifest.json"))
    }

    pub fn write_beside(&self, output: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        std::fs::write(Self::path_for(output), text + "\n")
    }
}
