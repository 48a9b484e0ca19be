use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::RunConfig;

/// A file produced by a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct Output {
    /// `artifacts[0]` is what goes to stdout when no directory is given.
    pub artifacts: Vec<Artifact>,
    /// Human-readable text printed to stdout in every mode.
    pub report: Option<String>,
    pub warnings: Vec<String>,
    /// Run facts recorded in the manifest.
    pub summary: BTreeMap<String, String>,
}

impl Output {
    pub fn push(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.artifacts.push(Artifact {
            path: path.into(),
            bytes,
        });
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.insert(key.to_string(), value.to_string());
    }
}

/// CSV with a header row; floats use the shortest round-trip form.
pub fn table<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [f64; N]>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row.as_slice())?;
    }
    w.into_inner().context("flushing csv")
}

/// CSV whose cells are already formatted.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().context("flushing csv")
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<&'a str>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub cli_version: &'a str,
    pub core_version: &'a str,
    pub artifacts: Vec<String>,
    pub summary: &'a BTreeMap<String, String>,
    pub config: &'a RunConfig,
}

/// Write every artifact and `manifest.toml` under `dir`.
pub fn write_dir(dir: &Path, out: &Output, manifest: &Manifest<'_>) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for a in &out.artifacts {
        let path = dir.join(&a.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let text = toml::to_string(manifest).context("serializing manifest")?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
