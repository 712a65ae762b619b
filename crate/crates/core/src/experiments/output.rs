//! Artifact files: commented CSV tables, binary trajectories, JSON and the manifest.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentKind;
use crate::error::{Error, Result};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"SFLDPTR1";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ExperimentKind,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::I(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

/// Floats use 17 significant digits so that values survive a text round trip.
fn format_cell(c: &Cell) -> String {
    match c {
        Cell::F(x) if x.is_nan() => "nan".into(),
        Cell::F(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
        Cell::F(x) => format!("{x:.16e}"),
        Cell::I(i) => i.to_string(),
        Cell::B(b) => b.to_string(),
        Cell::S(s) => s.replace([',', '\n'], " "),
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// `key=value` pairs for the metadata header line.
    pub meta: Vec<(String, String)>,
    pub note: String,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), ..Default::default() }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Self { columns, ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn note(mut self, note: &str) -> Self {
        self.note = note.to_string();
        self
    }

    /// Eight `#` lines, the column-name row, then the data rows.
    pub fn render(&self, name: &str, prov: &Provenance) -> String {
        let meta = if self.meta.is_empty() {
            "-".to_string()
        } else {
            self.meta.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("; ")
        };
        let mut out = String::new();
        out.push_str(&format!("# sfldp {} {}\n", prov.kind, name));
        out.push_str(&format!("# version: {}\n", prov.version));
        out.push_str(&format!("# config_hash: {}\n", prov.config_hash));
        out.push_str(&format!("# seed: {}\n", prov.seed));
        out.push_str(&format!("# rows: {}\n", self.rows.len()));
        out.push_str(&format!("# meta: {meta}\n"));
        out.push_str(&format!("# note: {}\n", if self.note.is_empty() { "-" } else { &self.note }));
        out.push_str(&format!("# columns: {}\n", self.columns.join(",")));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(format_cell).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Reads a table written by [`Table::render`]: header lines and the numeric body.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.by_ref().take(8).map(str::to_string).collect();
    if header.len() != 8 || header.iter().any(|l| !l.starts_with('#')) {
        return Err(Error::invalid("csv artifact must start with eight comment lines"));
    }
    let columns = lines
        .next()
        .ok_or_else(|| Error::invalid("csv artifact has no column row"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    Ok((header, columns, rows))
}

/// Trajectory rows `(n_steps + 1) x n_modes` in the little-endian binary layout.
pub fn encode_trajectory(horizon: f64, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("trajectory rows must be nonempty and of equal length"));
    }
    let mut out = Vec::with_capacity(32 + 8 * n * rows.len());
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&((rows.len() - 1) as u64).to_le_bytes());
    out.extend_from_slice(&horizon.to_le_bytes());
    for r in rows {
        for x in r {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

/// Inverse of [`encode_trajectory`]: `(horizon, rows)`.
pub fn decode_trajectory(bytes: &[u8]) -> Result<(f64, Vec<Vec<f64>>)> {
    let bad = || Error::invalid("not a trajectory file");
    if bytes.len() < 32 || &bytes[..8] != TRAJECTORY_MAGIC {
        return Err(bad());
    }
    let word = |k: usize| <[u8; 8]>::try_from(&bytes[k..k + 8]).unwrap();
    let n = u64::from_le_bytes(word(8)) as usize;
    let steps = u64::from_le_bytes(word(16)) as usize;
    let horizon = f64::from_le_bytes(word(24));
    if bytes.len() != 32 + 8 * n * (steps + 1) {
        return Err(bad());
    }
    let rows = (0..=steps)
        .map(|r| (0..n).map(|i| f64::from_le_bytes(word(32 + 8 * (r * n + i)))).collect())
        .collect();
    Ok((horizon, rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub provenance: Provenance,
    /// `ok`, `partial` (blow-up mid-run) or `underflow` (no tube hits).
    pub status: String,
    pub messages: Vec<String>,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes artifacts into one directory and records their checksums.
pub struct ArtifactWriter {
    dir: PathBuf,
    prov: Provenance,
    files: Vec<FileEntry>,
}

impl ArtifactWriter {
    pub fn create(dir: impl AsRef<Path>, prov: Provenance) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf(), prov, files: Vec::new() })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.prov
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut f = fs::File::create(self.dir.join(name))?;
        f.write_all(bytes)?;
        self.files.retain(|e| e.name != name);
        self.files.push(FileEntry { name: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<()> {
        let text = table.render(name.trim_end_matches(".csv"), &self.prov);
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn finish(self, status: &str, messages: Vec<String>) -> Result<Manifest> {
        let manifest = Manifest { provenance: self.prov, status: status.to_string(), messages, files: self.files };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST_NAME), text)?;
        Ok(manifest)
    }
}

/// Re-hashes every file listed in a manifest; returns the names that do not match.
pub fn verify_manifest(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.as_ref().join(MANIFEST_NAME))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut bad = Vec::new();
    for e in &manifest.files {
        match fs::read(dir.as_ref().join(&e.name)) {
            Ok(bytes) if sha256_hex(&bytes) == e.sha256 => {}
            _ => bad.push(e.name.clone()),
        }
    }
    Ok(bad)
}
