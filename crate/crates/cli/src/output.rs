//! Output directory with a hash manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fail::Failure;

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Stage {
    name: String,
    seconds: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a serde_json::Value,
    status: &'a str,
    stages: &'a [Stage],
    artifacts: &'a [Artifact],
}

pub const MANIFEST: &str = "manifest.json";

/// Artifacts written through this handle are hashed into `manifest.json`,
/// which is written on [`OutDir::finish`] or, with status `failed`, on drop.
pub struct OutDir {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    artifacts: Vec<Artifact>,
    stages: Vec<Stage>,
    done: bool,
}

impl OutDir {
    pub fn create(dir: &Path, command: &str, config: &serde_json::Value) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config: config.clone(),
            artifacts: Vec::new(),
            stages: Vec::new(),
            done: false,
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        if name == MANIFEST || self.artifacts.iter().any(|a| a.path == name) {
            return Err(Failure::Validation(format!("artifact {name} written twice")));
        }
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    fn write_manifest(&self, status: &str) -> Result<(), Failure> {
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config: &self.config,
            status,
            stages: &self.stages,
            artifacts: &self.artifacts,
        };
        let text = isopulse_core::io::to_sorted_json(&m)?;
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).map_err(|e| Failure::io(&path, e))
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.done = true;
        self.write_manifest("ok")
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        if !self.done {
            if let Err(e) = self.write_manifest("failed") {
                eprintln!("warning: could not write the manifest: {e}");
            }
        }
    }
}
