//! CSV rendering, output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Twelve significant digits, shortest form, `nan`/`inf` spelled out.
pub fn fmt12(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = trim(format!("{v:.decimals$}"));
        // rounding can carry into a new digit (9.99.. -> 10), still fine as text
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{v:.11e}");
        let (mant, e) = s.split_once('e').unwrap();
        format!("{}e{}", trim(mant.to_string()), e)
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt12).unwrap_or_default()
}

/// CSV table built in memory so the bytes can be digested before writing.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Result<Self, CliError> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn with_header(header: Vec<String>) -> Result<Self, CliError> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(&header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn numbers(&mut self, values: &[f64]) -> Result<(), CliError> {
        self.row(values.iter().map(|&v| fmt12(v)))
    }

    pub fn into_bytes(self) -> Result<Vec<u8>, CliError> {
        self.writer.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub value: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: String,
    pub code_version: String,
    pub config: serde_json::Value,
    pub workers: usize,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub outputs: Vec<OutputFile>,
    /// Scalar results of the task.
    pub summary: serde_json::Value,
    pub failures: Vec<Failure>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files of one run, all under `dir`.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile { name: name.into(), bytes: bytes.len() as u64, sha256: digest(bytes) });
        Ok(())
    }

    pub fn table(&mut self, name: &str, table: Table) -> Result<(), CliError> {
        let b = table.into_bytes()?;
        self.write(name, &b)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut b = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.into()))?;
        b.push(b'\n');
        self.write(name, &b)
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}

/// Recompute the digests of a manifest's outputs under `dir`.
pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Result<bool, CliError> {
    for f in &manifest.outputs {
        let bytes = fs::read(dir.join(&f.name))?;
        if digest(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
            return Ok(false);
        }
    }
    Ok(true)
}
