//! Exit-code classification, atomic file output and run manifests.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_COMPUTE: u8 = 4;

/// An error tagged with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_CONFIG,
            error,
        }
    }

    pub fn io(error: anyhow::Error) -> Self {
        Self { code: EXIT_IO, error }
    }

    pub fn compute(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_COMPUTE,
            error,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.code {
            EXIT_CONFIG => "configuration error",
            EXIT_IO => "i/o error",
            _ => "computation failed",
        };
        write!(f, "{kind}: {:#}", self.error)
    }
}

pub trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn io(self) -> Result<T, Failure>;
    fn compute(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::config(e.into()))
    }

    fn io(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::io(e.into()))
    }

    fn compute(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::compute(e.into()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// `model.json` -> `model.json.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// What is needed to rerun a command and get identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub config: Option<serde_json::Value>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Outputs are staged in memory and only written once every one of them has
/// been produced, each through a temporary file and a rename.
#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
    inputs: Vec<FileDigest>,
}

impl Staged {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.into(), bytes.into()));
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Writes everything plus a manifest at `manifest_at`.
    pub fn commit<C: Serialize>(
        mut self,
        command: &str,
        seed: Option<u64>,
        config: Option<&C>,
        manifest_at: PathBuf,
    ) -> Result<Vec<PathBuf>, Failure> {
        let config = config
            .map(|c| serde_json::to_value(c).context("serialising the resolved config"))
            .transpose()
            .config()?;
        let manifest = Manifest {
            schema_version: 1,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: aoa_core::VERSION,
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            seed,
            config_sha256: config.as_ref().map(|c| sha256_hex(c.to_string().as_bytes())),
            config,
            inputs: std::mem::take(&mut self.inputs),
            outputs: self
                .files
                .iter()
                .map(|(p, b)| FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_hex(b),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        self.files.push((manifest_at, text.into_bytes()));
        let mut written = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            write_atomic(path, bytes).io()?;
            written.push(path.clone());
        }
        Ok(written)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display())).io()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn paths() {
        assert_eq!(sidecar_path(Path::new("x/d.csv")), Path::new("x/d.meta.json"));
        assert_eq!(manifest_path(Path::new("m.json")), Path::new("m.json.manifest.json"));
        assert_eq!(sha256_hex(b"").len(), 64);
    }

    #[test]
    fn classification_sets_exit_codes() {
        let r: Result<(), std::io::Error> = Err(std::io::Error::other("x"));
        assert_eq!(r.io().unwrap_err().code, EXIT_IO);
        let r: Result<(), anyhow::Error> = Err(anyhow::anyhow!("x"));
        assert_eq!(r.compute().unwrap_err().code, EXIT_COMPUTE);
    }
}
