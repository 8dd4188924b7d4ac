//! Configuration file handling and flag/file/default resolution.
//!
//! Precedence is flags > config file > built-in defaults. The resolved
//! ("effective") configuration of each run is echoed into the headers of
//! the artifacts it writes.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use revrank_core::error::{Error, Result};

/// Keys accepted in the JSON config file. Unknown keys are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    // paths
    pub corpus: Option<PathBuf>,
    pub papers: Option<PathBuf>,
    pub mentions: Option<PathBuf>,
    pub authors: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub paper_index: Option<PathBuf>,
    pub profile_index: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub triplets: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub benchmark_papers: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub holdout: Option<PathBuf>,
    pub prompt_template: Option<PathBuf>,
    // client settings
    pub backend: Option<String>,
    pub embedding_endpoint: Option<String>,
    pub keyword_endpoint: Option<String>,
    pub auth_token: Option<String>,
    pub retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    // numeric knobs
    pub dim: Option<usize>,
    pub recall_threshold: Option<f64>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub n_keywords: Option<usize>,
    pub reference_date: Option<String>,
    pub rank: Option<usize>,
    pub temperature: Option<f64>,
    pub lambda_ce: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub patience: Option<usize>,
    pub warmup: Option<f64>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub scale_max: Option<u8>,
    pub coi: Option<String>,
    pub scorer: Option<String>,
    pub top_k: Option<usize>,
    pub verifier: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<FileConfig> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::Config {
                    detail: format!("{}: {e}", p.display()),
                })
            }
        }
    }
}

/// Collects the resolved settings of one run for artifact provenance.
#[derive(Debug, Default)]
pub struct Effective {
    values: BTreeMap<String, serde_json::Value>,
}

impl Effective {
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(&self.values).expect("config values serialize")
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.values.insert(
            key.to_string(),
            serde_json::to_value(value).expect("config value serializes"),
        );
    }

    /// flag > file > default.
    pub fn pick<T: Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
        file: Option<T>,
        default: T,
    ) -> T {
        let v = flag.or(file).unwrap_or(default);
        self.record(key, &v);
        v
    }

    /// flag > file, no default; absent is an error naming the key.
    pub fn pick_required<T: Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
        file: Option<T>,
    ) -> Result<T> {
        match flag.or(file) {
            Some(v) => {
                self.record(key, &v);
                Ok(v)
            }
            None => Err(Error::Config {
                detail: format!("required setting {key:?} missing (flag or config file)"),
            }),
        }
    }

    /// Optional setting: recorded only when present.
    pub fn pick_optional<T: Serialize + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
        file: Option<T>,
    ) -> Option<T> {
        let v = flag.or(file);
        if let Some(v) = &v {
            self.record(key, v);
        }
        v
    }
}

/// Parse a string-typed setting into its domain type.
pub fn parse_setting<T>(key: &str, raw: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| Error::Config {
        detail: format!("invalid {key}: {e}"),
    })
}

