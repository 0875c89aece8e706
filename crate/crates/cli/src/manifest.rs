use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileRef {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun one subcommand; written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_hash: Option<String>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            vocab_hash: None,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(file_ref(path)?);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        self.outputs.push(file_ref(path)?);
        Ok(self)
    }

    /// Writes `<primary>.manifest.json`.
    pub fn write_beside(&self, primary: &Path) -> Result<PathBuf> {
        let path = with_suffix(primary, ".manifest.json");
        write_atomic(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, self)?;
            w.write_all(b"\n")
        })?;
        Ok(path)
    }
}

fn file_ref(path: &Path) -> Result<FileRef> {
    Ok(FileRef {
        path: path.to_path_buf(),
        sha256: sha256_file(path).with_context(|| format!("hashing {}", path.display()))?,
    })
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let tmp = claimlab::corpus::tmp_path(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}
