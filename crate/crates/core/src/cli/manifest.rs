use std::path::{Path, PathBuf};

use chrono::Local;
use serde::Serialize;

use crate::bench::write_text;
use crate::error::{Error, Result};

/// What a run did and with which fully resolved config. Written when the
/// run starts and rewritten when it ends.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub run_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub tool_version: &'static str,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize, seed: u64, runs_root: &Path) -> Result<Self> {
        let now = Local::now();
        let stem = format!("{}-{command}-seed{seed}", now.format("%Y%m%d-%H%M%S"));
        let mut run_dir = runs_root.join(&stem);
        let mut n = 2;
        while run_dir.exists() {
            run_dir = runs_root.join(format!("{stem}-{n}"));
            n += 1;
        }
        std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
        let m = Self {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seed,
            run_dir,
            artifacts: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION"),
            started_at: now.to_rfc3339(),
            finished_at: None,
            status: "running".into(),
        };
        m.write()?;
        Ok(m)
    }

    pub fn path(&self) -> PathBuf {
        self.run_dir.join(MANIFEST_FILE)
    }

    pub fn write(&self) -> Result<()> {
        write_text(&self.path(), &(serde_json::to_string_pretty(self)? + "\n"))
    }

    pub fn finish(&mut self, status: &str) -> Result<()> {
        self.finished_at = Some(Local::now().to_rfc3339());
        self.status = status.into();
        self.write()
    }

    /// `explicit` if given, otherwise `name` inside the run directory.
    pub fn output(&mut self, explicit: Option<&Path>, name: &str) -> PathBuf {
        let p = explicit.map_or_else(|| self.run_dir.join(name), Path::to_path_buf);
        self.artifacts.push(p.clone());
        p
    }
}
