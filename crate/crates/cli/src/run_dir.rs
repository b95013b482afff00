use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// Output directory of one command with a manifest of everything written.
pub struct RunDir {
    root: PathBuf,
    command: String,
    files: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            command: command.into(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Path for a new artifact; recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.into());
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.file(name);
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn finish(mut self, config: &RunConfig, status: &str) -> Result<()> {
        let manifest: Value = json!({
            "command": self.command,
            "status": status,
            "version": env!("CARGO_PKG_VERSION"),
            "threads": rayon::current_num_threads(),
            "elapsed_seconds": self.started.elapsed().as_secs_f64(),
            "files": self.files,
            "config": config,
        });
        let path = self.root.join("manifest.json");
        self.files.clear();
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
