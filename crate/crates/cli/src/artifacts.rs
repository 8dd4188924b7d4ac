//! Artifact I/O: JSONL files with a provenance header line, JSON reports,
//! and meta sidecars for binary formats.
//!
//! Every artifact this tool writes embeds the effective configuration that
//! produced it. JSONL artifacts carry it as a first header line
//! `{"artifact": ..., "version": 1, "config": {...}}`; binary and CSV
//! artifacts get a `<file>.meta.json` sidecar instead. Readers tolerate a
//! missing header so hand-made fixtures load too.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use revrank_core::error::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;

fn header_value(artifact: &str, config: &serde_json::Value) -> serde_json::Value {
    json!({
        "artifact": artifact,
        "version": ARTIFACT_VERSION,
        "config": config,
    })
}

/// Write items as JSONL with a leading header line.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    artifact: &str,
    config: &serde_json::Value,
    items: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header_value(artifact, config))?;
    w.write_all(b"\n")?;
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a JSONL artifact, skipping the header line when present.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(&line) {
                if value.get("artifact").is_some() {
                    continue;
                }
            }
        }
        let item: T = serde_json::from_str(&line).map_err(|e| Error::FileFormat {
            path: path.display().to_string(),
            detail: format!("line {}: {e}", idx + 1),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Write a single-object JSON artifact (reports, pools).
pub fn write_json(
    path: &Path,
    artifact: &str,
    config: &serde_json::Value,
    payload: serde_json::Value,
) -> Result<()> {
    let mut object = serde_json::Map::new();
    object.insert("artifact".to_string(), json!(artifact));
    object.insert("version".to_string(), json!(ARTIFACT_VERSION));
    object.insert("config".to_string(), config.clone());
    if let serde_json::Value::Object(fields) = payload {
        for (k, v) in fields {
            object.insert(k, v);
        }
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &serde_json::Value::Object(object))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Provenance sidecar for binary/CSV artifacts.
pub fn write_meta_sidecar(path: &Path, artifact: &str, config: &serde_json::Value) -> Result<()> {
    let meta_path = sidecar_path(path);
    let mut w = BufWriter::new(std::fs::File::create(meta_path)?);
    serde_json::to_writer_pretty(&mut w, &header_value(artifact, config))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Write a TSV file (UTF-8, one row per line).
pub fn write_tsv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        writeln!(w, "{}", row.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

/// Read one paper id per non-empty line.
pub fn read_id_lines(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            out.push(trimmed.to_string());
        }
    }
    Ok(out)
}
