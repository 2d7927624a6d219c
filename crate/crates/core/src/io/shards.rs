//! Per-period shard files and their manifest.
//!
//! A shard is written to `<name>.partial` and renamed into place only after
//! a successful flush, so an aborted write leaves the `.partial` file behind
//! as the marker. The manifest (`manifest.jsonl`) holds one JSON object per
//! shard: `{"path":..,"rows":..,"sha256":..}`.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn shard_name(period: u32) -> String {
    format!("period_{period}.tsv")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub rows: u64,
    pub sha256: String,
}

/// Writer that hashes everything passing through it.
pub struct ShardFile {
    inner: BufWriter<File>,
    hasher: Sha256,
    partial: PathBuf,
    target: PathBuf,
    name: String,
}

impl ShardFile {
    pub fn create(dir: &Path, name: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let target = dir.join(name);
        let partial = dir.join(format!("{name}.partial"));
        let inner = BufWriter::new(File::create(&partial)?);
        Ok(Self { inner, hasher: Sha256::new(), partial, target, name: name.to_string() })
    }

    /// Flushes, renames into place and returns the manifest entry.
    pub fn finish(mut self, rows: u64) -> io::Result<ManifestEntry> {
        self.inner.flush()?;
        self.inner.get_ref().sync_all()?;
        fs::rename(&self.partial, &self.target)?;
        let digest = self.hasher.finalize();
        Ok(ManifestEntry { path: self.name, rows, sha256: hex(&digest) })
    }
}

impl Write for ShardFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> io::Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let mut out = BufWriter::new(File::create(&path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> io::Result<Vec<ManifestEntry>> {
    let f = BufReader::new(File::open(dir.join(MANIFEST_FILE))?);
    f.lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(io::Error::from))
        .collect()
}
