use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Bad flags, bad config or missing input paths. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn require_exists(what: &str, path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} `{}` does not exist", path.display())))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file, or of `(relative path, file digest)` pairs over a
/// directory tree in sorted order.
pub fn digest_path(path: &Path) -> anyhow::Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for rel in files {
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(digest_path(&path.join(&rel))?.as_bytes());
        }
        Ok(hex(&h.finalize()))
    } else {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(hex(&Sha256::digest(bytes)))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: &'a [String],
    cwd: String,
    config: Option<FileDigest>,
    seed: u64,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    counts: &'a BTreeMap<String, serde_json::Value>,
}

/// Artifacts of one command, buffered until [`Run::commit`] so a failed run
/// leaves nothing half-written behind.
pub struct Run {
    command: String,
    out_dir: PathBuf,
    seed: u64,
    config: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    counts: BTreeMap<String, serde_json::Value>,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Run {
    pub fn new(command: &str, out_dir: PathBuf, seed: u64, config: Option<PathBuf>) -> Run {
        Run {
            command: command.to_string(),
            out_dir,
            seed,
            config,
            inputs: Vec::new(),
            counts: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    /// Queues a file; relative names land in the output directory.
    pub fn output(&mut self, name: impl AsRef<Path>, contents: impl Into<Vec<u8>>) -> PathBuf {
        let path = self.out_dir.join(name);
        self.files.push((path.clone(), contents.into()));
        path
    }

    pub fn count(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("count serializes");
        self.counts.insert(key.to_string(), v);
    }

    /// Writes every queued file plus `<command>.manifest.json`. On the first
    /// failure the files already written are removed again.
    pub fn commit(mut self) -> anyhow::Result<()> {
        let argv: Vec<String> = std::env::args().skip(1).collect();
        let digest = |p: &Path| -> anyhow::Result<FileDigest> {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: digest_path(p)?,
            })
        };
        let inputs = self.inputs.iter().map(|p| digest(p)).collect::<anyhow::Result<_>>()?;
        let config = self.config.as_deref().map(digest).transpose()?;
        let outputs = self
            .files
            .iter()
            .map(|(p, bytes)| FileDigest {
                path: p.display().to_string(),
                sha256: hex(&Sha256::digest(bytes)),
            })
            .collect();
        let cwd = std::env::current_dir()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let manifest = Manifest {
            tool: "dstdoctor",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            argv: &argv,
            cwd,
            config,
            seed: self.seed,
            inputs,
            outputs,
            counts: &self.counts,
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        let name = format!("{}.manifest.json", self.command);
        self.output(name, json);

        let mut written: Vec<&Path> = Vec::new();
        for (path, bytes) in &self.files {
            let res = path
                .parent()
                .map_or(Ok(()), fs::create_dir_all)
                .and_then(|_| fs::write(path, bytes));
            if let Err(e) = res {
                for w in written {
                    let _ = fs::remove_file(w);
                }
                return Err(e).with_context(|| format!("writing {}", path.display()));
            }
            written.push(path);
        }
        Ok(())
    }
}
