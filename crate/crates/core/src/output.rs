//! Output formats, content hashing and atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentSpec, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::sim::TrajectoryRecord;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Git-style object hash: sha256 over `"blob <len>\0" ++ bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Hash of the resolved parameters. Output path and thread count are
/// excluded: they do not change the produced bytes.
pub fn config_hash(spec: &ExperimentSpec) -> String {
    let canonical = serde_json::json!({
        "schema_version": spec.schema_version,
        "params": spec.params,
        "format": spec.format,
    });
    sha256_hex(canonical.to_string().as_bytes())
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// A small CSV builder with a leading `#` provenance line.
pub struct CsvWriter {
    buf: String,
    columns: usize,
}

impl CsvWriter {
    pub fn new(config_hash: &str, header: &[String]) -> Self {
        let mut buf = format!("# sid-sphere schema_version={SCHEMA_VERSION} config_hash={config_hash}\n");
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}

/// Reads the data rows of a CSV written by [`CsvWriter`].
pub fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .map(|l| l.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

/// Column names of a trajectory CSV: `t`, `m0..mN`, then `mu_<label>`.
pub fn trajectory_header(record: &TrajectoryRecord, with_seed: bool) -> Vec<String> {
    let mut h = Vec::new();
    if with_seed {
        h.push("seed".to_string());
    }
    h.push("t".to_string());
    h.extend((0..record.terminal_state.m.len()).map(|i| format!("m{i}")));
    h.extend(record.test_labels.iter().map(|l| format!("mu_{l}")));
    h
}

pub fn trajectory_rows(record: &TrajectoryRecord, with_seed: bool, csv: &mut CsvWriter) {
    for c in &record.checkpoints {
        let mut cells = Vec::with_capacity(2 + c.m.len() + c.test_means.len());
        if with_seed {
            cells.push(record.seed().to_string());
        }
        cells.push(fmt_f64(c.t));
        cells.extend(c.m.iter().map(|v| fmt_f64(*v)));
        cells.extend(c.test_means.iter().map(|v| fmt_f64(*v)));
        csv.row(&cells);
    }
}

/// One file produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub content_hash: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub spec: ExperimentSpec,
    pub outputs: Vec<ManifestEntry>,
    pub postconditions_ok: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn to_artifact(&self, path: PathBuf) -> Artifact {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        Artifact { path, bytes }
    }
}

/// Writes all artifacts through temporary files in their target
/// directories and renames them into place only after every write
/// succeeded. On error nothing is left behind.
pub fn write_atomically(artifacts: &[Artifact]) -> Result<()> {
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let dir = match a.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
        tmp.write_all(&a.bytes)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, a.path.clone()));
    }
    let mut persisted: Vec<PathBuf> = Vec::new();
    for (tmp, path) in staged {
        if let Err(e) = tmp.persist(&path) {
            for p in &persisted {
                let _ = std::fs::remove_file(p);
            }
            return Err(Error::Io(format!("{}: {}", path.display(), e.error)));
        }
        persisted.push(path);
    }
    Ok(())
}

/// `base` with `suffix` appended to its file name.
pub fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}
