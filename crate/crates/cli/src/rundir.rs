use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

pub const MANIFEST: &str = "manifest.json";

/// One run directory: every output file is registered in the manifest.
pub struct RunDir {
    path: PathBuf,
    verb: String,
    config: PathBuf,
    files: Vec<String>,
    started: u64,
    clock: Instant,
}

impl RunDir {
    pub fn create(out: &Path, run_dir: Option<&Path>, verb: &str, config: &Path, name: &str) -> std::io::Result<Self> {
        let path = match run_dir {
            Some(p) => p.to_path_buf(),
            None => out.join(format!("{name}-{verb}")),
        };
        fs::create_dir_all(&path)?;
        Ok(Self {
            path,
            verb: verb.into(),
            config: config.to_path_buf(),
            files: Vec::new(),
            started: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            clock: Instant::now(),
        })
    }

    fn register(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.into());
        }
        self.path.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let p = self.register(name);
        let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        fs::write(p, text + "\n")
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> std::io::Result<()> {
        let p = self.register(name);
        fs::write(p, text)
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> std::io::Result<()> {
        let p = self.register(name);
        let mut w = BufWriter::new(fs::File::create(p)?);
        f(&mut w)?;
        w.flush()
    }

    pub fn finish(mut self, exit_code: u8, status: &str, summary: Value) -> std::io::Result<PathBuf> {
        let manifest = json!({
            "tool": "lpvdt",
            "version": env!("CARGO_PKG_VERSION"),
            "verb": self.verb,
            "config": self.config.display().to_string(),
            "started_unix": self.started,
            "wall_seconds": self.clock.elapsed().as_secs_f64(),
            "exit_code": exit_code,
            "status": status,
            "summary": summary,
            "files": self.files,
        });
        let p = self.register(MANIFEST);
        fs::write(&p, serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)? + "\n")?;
        Ok(self.path)
    }
}
