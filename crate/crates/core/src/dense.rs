//! Embedding store with exact brute-force cosine search, threshold recall,
//! and the pooling aggregators used by baseline scorers.
//!
//! Vectors are unit-normalized at insert, so cosine is a plain dot product.
//! Search is an exact linear scan: at desk scale (≤ 10⁵ docs) exactness is
//! cheap and keeps tests deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::Author;
use crate::error::{Error, Result};

const STORE_MAGIC: &[u8; 4] = b"EMBS";
const STORE_VERSION: u32 = 1;

/// Similarity pooling rule for aggregating per-publication scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingStrategy {
    Mean,
    /// 75th percentile with linear interpolation at rank `0.75·(n−1)` over
    /// the ascending sort.
    P75,
    Max,
}

impl std::str::FromStr for PoolingStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(PoolingStrategy::Mean),
            "p75" => Ok(PoolingStrategy::P75),
            "max" => Ok(PoolingStrategy::Max),
            other => Err(format!("unknown pooling strategy {other:?}")),
        }
    }
}

impl std::fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::P75 => "p75",
            PoolingStrategy::Max => "max",
        })
    }
}

/// Doc-id keyed store of unit-normalized embedding vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vectors.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Insert a vector, normalizing to unit L2. Rejects wrong dimension,
    /// non-finite components, and the zero vector.
    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadVector { doc_id: id });
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::BadVector { doc_id: id });
        }
        let unit: Vec<f64> = vector.into_iter().map(|x| x / norm).collect();
        self.vectors.insert(id, unit);
        Ok(())
    }

    /// Cosine similarity between two stored docs.
    pub fn cosine_between(&self, a: &str, b: &str) -> Result<f64> {
        let va = self.get(a).ok_or_else(|| Error::UnknownDoc {
            doc_id: a.to_string(),
        })?;
        let vb = self.get(b).ok_or_else(|| Error::UnknownDoc {
            doc_id: b.to_string(),
        })?;
        Ok(dot(va, vb))
    }

    /// Exact recall: every stored doc with `cosine(query, doc) > threshold`
    /// (strictly).
    pub fn threshold_recall(&self, query: &[f64], threshold: f64) -> Result<BTreeSet<String>> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(self
            .vectors
            .iter()
            .filter(|(_, v)| dot(query, v) > threshold)
            .map(|(id, _)| id.clone())
            .collect())
    }

    /// Pool cosine similarities between a stored query doc and each of a
    /// reviewer's embedded publications.
    pub fn baseline_reviewer_score(
        &self,
        query_id: &str,
        reviewer: &Author,
        strategy: PoolingStrategy,
    ) -> Result<f64> {
        let query = self.get(query_id).ok_or_else(|| Error::UnknownDoc {
            doc_id: query_id.to_string(),
        })?;
        let sims: Vec<f64> = reviewer
            .paper_ids
            .iter()
            .filter_map(|p| self.get(p))
            .map(|v| dot(query, v))
            .collect();
        if sims.is_empty() {
            return Err(Error::ColdStartReviewer {
                author_id: reviewer.author_id.clone(),
            });
        }
        pool_scores(&sims, strategy)
    }

    /// Persist: header {magic, version, dim, count} then per doc the id and
    /// raw little-endian 32-bit floats. Conversion to f32 is lossy; vectors
    /// are re-normalized on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.vectors.len() as u64).to_le_bytes())?;
        for (id, v) in &self.vectors {
            let bytes = id.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            for &x in v {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let bad = |detail: &str| Error::FileFormat {
            path: path.display().to_string(),
            detail: detail.to_string(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != STORE_VERSION {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;

        let mut store = EmbeddingStore::new(dim);
        for _ in 0..count {
            r.read_exact(&mut u32buf)?;
            let id_len = u32::from_le_bytes(u32buf) as usize;
            let mut id_bytes = vec![0u8; id_len];
            r.read_exact(&mut id_bytes)?;
            let id = String::from_utf8(id_bytes).map_err(|_| bad("non-UTF-8 id"))?;
            let mut vec = Vec::with_capacity(dim);
            let mut f32buf = [0u8; 4];
            for _ in 0..dim {
                r.read_exact(&mut f32buf)?;
                vec.push(f32::from_le_bytes(f32buf) as f64);
            }
            store.insert(id, vec)?;
        }
        Ok(store)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Aggregate a non-empty list of finite similarities.
pub fn pool_scores(similarities: &[f64], strategy: PoolingStrategy) -> Result<f64> {
    if similarities.is_empty() {
        return Err(Error::EmptyPool);
    }
    if similarities.iter().any(|x| !x.is_finite()) {
        return Err(Error::BadVector {
            doc_id: "<similarity list>".to_string(),
        });
    }
    Ok(match strategy {
        PoolingStrategy::Mean => similarities.iter().sum::<f64>() / similarities.len() as f64,
        PoolingStrategy::Max => similarities
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        PoolingStrategy::P75 => {
            let mut sorted = similarities.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rank = 0.75 * (sorted.len() - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = rank.ceil() as usize;
            let frac = rank - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    })
}
