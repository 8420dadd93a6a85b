//! Artifact writers. Every emitted file carries the tool version and the
//! SHA-256 of the effective config: JSON under a `meta` object, CSV as
//! leading `#` comment lines. Identical configs and seeds therefore produce
//! byte-identical artifacts.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub config_sha256: String,
}

impl Meta {
    pub fn for_config(config: &ExperimentConfig) -> Self {
        Self {
            version: qrobust_core::VERSION,
            config_sha256: config_hash(config),
        }
    }
}

/// SHA-256 over the canonical (compact, field-ordered) JSON serialization.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&canonical);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    }
    Ok(())
}

/// Writes `{"meta": ..., "data": payload}` pretty-printed.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, payload: &T) -> Result<PathBuf> {
    ensure_parent(path)?;
    let doc = json!({ "meta": meta, "data": payload });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// Opens a CSV file with the meta comment lines already written.
pub fn csv_file(path: &Path, meta: &Meta) -> Result<File> {
    ensure_parent(path)?;
    let mut file =
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    writeln!(file, "# version={}", meta.version)?;
    writeln!(file, "# config_sha256={}", meta.config_sha256)?;
    Ok(file)
}

/// Writes one header row plus one record per element of `rows`.
pub fn write_csv_rows<T: Serialize>(path: &Path, meta: &Meta, rows: &[T]) -> Result<PathBuf> {
    let file = csv_file(path, meta)?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(path.to_path_buf())
}

/// `[[{"re": x, "im": y}, ...], ...]` rendering of a complex matrix.
pub fn complex_matrix_json(matrix: &Array2<Complex64>) -> serde_json::Value {
    let rows: Vec<Vec<serde_json::Value>> = matrix
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .map(|z| json!({ "re": z.re, "im": z.im }))
                .collect()
        })
        .collect();
    json!(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        b.mc.seed += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn csv_carries_meta_lines() {
        #[derive(Serialize)]
        struct Row {
            x: f64,
            y: f64,
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let meta = Meta::for_config(&ExperimentConfig::default());
        write_csv_rows(&path, &meta, &[Row { x: 1.0, y: 2.0 }]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# version="));
        assert!(lines.next().unwrap().starts_with("# config_sha256="));
        assert_eq!(lines.next().unwrap(), "x,y");
        assert_eq!(lines.next().unwrap(), "1.0,2.0");
    }
}
