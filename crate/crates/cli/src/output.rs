//! Output directory bookkeeping and the JSON run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const OUT_ENV: &str = "MIPT_XEB_OUT";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub arguments: Vec<String>,
    pub config_hash: String,
    pub config: String,
    pub seed: u64,
    pub workers: usize,
    pub notes: Vec<String>,
    /// Extra scalar results keyed by name, e.g. tolerances in force.
    pub values: serde_json::Map<String, serde_json::Value>,
    pub failures: Vec<String>,
    pub files: Vec<FileEntry>,
    pub timings: Vec<Timing>,
}

/// Writes artifacts under one directory and records each in the manifest.
pub struct Output {
    dir: PathBuf,
    manifest: Manifest,
    started: Instant,
    stage: Instant,
}

impl Output {
    pub fn create(dir: PathBuf, manifest: Manifest) -> Result<Self, Failure> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| Failure::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(Self {
            dir,
            manifest,
            started: Instant::now(),
            stage: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, relative: &str, contents: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.dir.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(runtime_io(&path))?;
        }
        std::fs::write(&path, contents).map_err(runtime_io(&path))?;
        self.manifest.files.retain(|f| f.path != relative);
        self.manifest.files.push(FileEntry {
            path: relative.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len(),
        });
        Ok(path)
    }

    /// Persists a circuit descriptor as `circuits/<hash>.circuit`.
    pub fn write_circuit(&mut self, circuit: &mipt_xeb::CircuitDescriptor) -> Result<String, Failure> {
        let hash = circuit.content_hash();
        self.write(&format!("circuits/{hash}.circuit"), circuit.serialize().as_bytes())?;
        Ok(hash)
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.manifest.notes.push(note.into());
    }

    pub fn value(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.manifest.values.insert(key.to_string(), value.into());
    }

    pub fn failure(&mut self, what: impl Into<String>) {
        let what = what.into();
        log::warn!("{what}");
        self.manifest.failures.push(what);
    }

    pub fn failures(&self) -> usize {
        self.manifest.failures.len()
    }

    /// Closes the current timing stage.
    pub fn lap(&mut self, stage: &str) {
        self.manifest.timings.push(Timing {
            stage: stage.to_string(),
            seconds: self.stage.elapsed().as_secs_f64(),
        });
        self.stage = Instant::now();
    }

    pub fn finish(mut self) -> Result<PathBuf, Failure> {
        self.manifest.timings.push(Timing {
            stage: "total".into(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        self.manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, json + "\n").map_err(runtime_io(&path))?;
        Ok(self.dir)
    }
}

fn runtime_io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

/// `--out` if given, else `$MIPT_XEB_OUT/<command>`, else
/// `./mipt-xeb-out/<command>`.
pub fn resolve_dir(explicit: Option<&Path>, command: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("mipt-xeb-out"))
            .join(command),
    }
}
