//! Artifact collection, CSV formatting and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::ingest::sha256_hex;

/// Files produced by a workflow, kept in memory until one writer flushes them.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }
}

/// Row-oriented CSV text; floats use the shortest representation that
/// parses back to the same bits.
#[derive(Debug)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut text = header.iter().map(|h| h.as_ref()).collect::<Vec<_>>().join(",");
        text.push('\n');
        Table { text }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                self.text.push(',');
            }
            match c {
                Cell::Float(v) => write!(self.text, "{v}").unwrap(),
                Cell::Int(v) => write!(self.text, "{v}").unwrap(),
                Cell::Text(s) => self.text.push_str(s),
                Cell::Empty => {}
            }
        }
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: FileHash,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn hash_of(path: impl Into<String>, bytes: &[u8]) -> FileHash {
    FileHash { path: path.into(), sha256: sha256_hex(bytes), bytes: bytes.len() }
}

/// Write every artifact and then `manifest.json` into `dir`.
pub fn flush(dir: &Path, artifacts: Artifacts, mut manifest: Manifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    for (name, bytes) in &artifacts.files {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|source| CliError::Io { path: p.clone(), source })?;
        manifest.outputs.push(hash_of(name.clone(), bytes));
    }
    let p = dir.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::write(&p, bytes).map_err(|source| CliError::Io { path: p.clone(), source })?;
    Ok(p)
}
