//! From-scratch Okapi BM25 over an inverted index, plus a TF-IDF cosine
//! baseline scorer.
//!
//! Two document roles exist in the pipeline: query papers are indexed as
//! `title ⊕ " " ⊕ abstract`, reviewer profiles as their linearized keyword
//! text. One index per role.
//!
//! The idf variant is `ln(1 + (N - df + 0.5)/(df + 0.5))`, which is never
//! negative. Downstream negative selection works with score ratios, so
//! scores must stay ≥ 0.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default BM25 term-frequency saturation.
pub const DEFAULT_K1: f64 = 1.2;
/// Default BM25 length normalization.
pub const DEFAULT_B: f64 = 0.75;

const INDEX_FORMAT_VERSION: u32 = 1;

/// Lowercase, split on non-alphanumeric runs, drop tokens shorter than two
/// characters. No stemming, no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.chars().flat_map(char::to_lowercase).collect::<String>())
        .filter(|t| t.chars().count() >= 2)
        .collect()
}

/// Inverted index with Okapi BM25 scoring.
///
/// Immutable after [`Bm25Index::build`]; concurrently readable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    version: u32,
    pub k1: f64,
    pub b: f64,
    /// term -> postings sorted by doc id, each (doc_id, term frequency ≥ 1)
    postings: BTreeMap<String, Vec<(String, u32)>>,
    doc_lengths: BTreeMap<String, usize>,
    avg_doc_length: f64,
}

impl Bm25Index {
    /// Build an index over `(doc_id, text)` pairs. Later entries with a
    /// duplicate id replace earlier ones.
    pub fn build<I, S>(docs: I, k1: f64, b: f64) -> Self
    where
        I: IntoIterator<Item = (String, S)>,
        S: AsRef<str>,
    {
        let mut doc_tokens: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (id, text) in docs {
            doc_tokens.insert(id, tokenize(text.as_ref()));
        }

        let mut postings: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (id, tokens) in &doc_tokens {
            doc_lengths.insert(id.clone(), tokens.len());
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push((id.clone(), count));
            }
        }

        let n = doc_lengths.len();
        let avg_doc_length = if n == 0 {
            0.0
        } else {
            doc_lengths.values().sum::<usize>() as f64 / n as f64
        };

        Bm25Index {
            version: INDEX_FORMAT_VERSION,
            k1,
            b,
            postings,
            doc_lengths,
            avg_doc_length,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.doc_lengths.contains_key(doc_id)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_lengths.keys().map(String::as_str)
    }

    /// Number of indexed documents containing `term`.
    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln(1 + (N - df + 0.5)/(df + 0.5))`; ≥ 0 for every df ≤ N.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| {
                p.binary_search_by(|(id, _)| id.as_str().cmp(doc_id))
                    .ok()
                    .map(|i| p[i].1)
            })
            .unwrap_or(0)
    }

    /// Okapi BM25 score of one document against a tokenized query.
    ///
    /// Query tokens are summed per occurrence; terms absent from the
    /// document contribute 0.
    pub fn score(&self, query_tokens: &[String], doc_id: &str) -> Result<f64> {
        let Some(&len) = self.doc_lengths.get(doc_id) else {
            return Err(Error::UnknownDoc {
                doc_id: doc_id.to_string(),
            });
        };
        let mut total = 0.0;
        for term in query_tokens {
            let tf = self.term_frequency(term, doc_id) as f64;
            if tf == 0.0 {
                continue;
            }
            let norm = if self.avg_doc_length > 0.0 {
                1.0 - self.b + self.b * len as f64 / self.avg_doc_length
            } else {
                1.0
            };
            total += self.idf(term) * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
        }
        Ok(total)
    }

    /// Score `candidate_ids` against the query and sort descending, ties
    /// broken by ascending doc id. Output is a permutation of the input.
    pub fn rank(&self, query_tokens: &[String], candidate_ids: &[String]) -> Result<Vec<(String, f64)>> {
        let mut scored = Vec::with_capacity(candidate_ids.len());
        for id in candidate_ids {
            scored.push((id.clone(), self.score(query_tokens, id)?));
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        Ok(scored)
    }

    /// TF-IDF cosine between two texts, with idf taken from this index.
    ///
    /// Weights are `ln(1 + tf) · idf(term)` over in-vocabulary terms; 0.0
    /// when either text has no in-vocabulary tokens. Weights are never
    /// negative, so the result lies in [0, 1].
    pub fn tfidf_cosine(&self, text_a: &str, text_b: &str) -> f64 {
        let a = self.tfidf_vector(text_a);
        let b = self.tfidf_vector(text_b);
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let dot: f64 = a
            .iter()
            .filter_map(|(t, wa)| b.get(t).map(|wb| wa * wb))
            .sum();
        let na: f64 = a.values().map(|w| w * w).sum::<f64>().sqrt();
        let nb: f64 = b.values().map(|w| w * w).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        dot / (na * nb)
    }

    fn tfidf_vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokenize(text) {
            if self.postings.contains_key(&t) {
                *tf.entry(t).or_insert(0) += 1;
            }
        }
        tf.into_iter()
            .map(|(t, c)| {
                let w = (1.0 + c as f64).ln() * self.idf(&t);
                (t, w)
            })
            .collect()
    }

    /// Persist as versioned JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let json = serde_json::to_string(self)?;
        f.write_all(json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = String::new();
        std::fs::File::open(path)?.read_to_string(&mut buf)?;
        let index: Bm25Index = serde_json::from_str(&buf)?;
        if index.version != INDEX_FORMAT_VERSION {
            return Err(Error::FileFormat {
                path: path.display().to_string(),
                detail: format!(
                    "unsupported index version {} (expected {})",
                    index.version, INDEX_FORMAT_VERSION
                ),
            });
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_splits_and_lowercases() {
        assert_eq!(tokenize("Graph-based RAG!"), vec!["graph", "based", "rag"]);
    }

    #[test]
    fn tokenize_drops_short_tokens() {
        assert!(tokenize("a I x").is_empty());
    }

    #[test]
    fn tokenize_handles_non_ascii() {
        assert_eq!(tokenize("Rétrieval rétrieval"), vec!["rétrieval", "rétrieval"]);
    }

    #[test]
    fn score_zero_when_no_term_overlap() {
        let idx = Bm25Index::build(
            vec![("d1".to_string(), "apple banana")],
            DEFAULT_K1,
            DEFAULT_B,
        );
        let q = tokenize("cherry melon");
        assert_eq!(idx.score(&q, "d1").unwrap(), 0.0);
    }

    #[test]
    fn score_matches_hand_evaluated_formula() {
        // Single doc "apple banana", query "apple", k1=1.2 b=0.75:
        // idf = ln(1 + 0.5/1.5) = ln(4/3); tf part = 2.2/(1 + 1.2) = 1.
        // Expected value computed with an independent scalar script.
        let idx = Bm25Index::build(vec![("d1".to_string(), "apple banana")], 1.2, 0.75);
        let q = tokenize("apple");
        let s = idx.score(&q, "d1").unwrap();
        assert!((s - 0.2876820724517809).abs() < 1e-12, "got {s}");
    }

    #[test]
    fn unknown_doc_is_an_error() {
        let idx = Bm25Index::build(vec![("d1".to_string(), "apple")], DEFAULT_K1, DEFAULT_B);
        assert!(matches!(
            idx.score(&tokenize("apple"), "nope"),
            Err(Error::UnknownDoc { .. })
        ));
    }

    /// Formula-direct scorer that never builds an inverted index.
    fn brute_force_bm25(
        docs: &[(String, Vec<String>)],
        query: &[String],
        doc_id: &str,
        k1: f64,
        b: f64,
    ) -> f64 {
        let n = docs.len() as f64;
        let avg = docs.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
        let (_, tokens) = docs.iter().find(|(id, _)| id == doc_id).unwrap();
        let len = tokens.len() as f64;
        let mut total = 0.0;
        for term in query {
            let tf = tokens.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = docs
                .iter()
                .filter(|(_, toks)| toks.contains(term))
                .count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = if avg > 0.0 { 1.0 - b + b * len / avg } else { 1.0 };
            total += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
        total
    }

    #[test]
    fn five_doc_ranking_matches_brute_force() {
        let texts = [
            ("d1", "graph neural networks for retrieval"),
            ("d2", "dense retrieval with transformers"),
            ("d3", "reviewer assignment via graph matching"),
            ("d4", "keyword extraction from abstracts"),
            ("d5", "retrieval retrieval retrieval graph"),
        ];
        let idx = Bm25Index::build(
            texts.iter().map(|(i, t)| (i.to_string(), *t)),
            DEFAULT_K1,
            DEFAULT_B,
        );
        let docs: Vec<(String, Vec<String>)> = texts
            .iter()
            .map(|(i, t)| (i.to_string(), tokenize(t)))
            .collect();
        let q = tokenize("graph retrieval");
        let ids: Vec<String> = texts.iter().map(|(i, _)| i.to_string()).collect();
        let ranked = idx.rank(&q, &ids).unwrap();
        let mut expected: Vec<(String, f64)> = ids
            .iter()
            .map(|id| (id.clone(), brute_force_bm25(&docs, &q, id, DEFAULT_K1, DEFAULT_B)))
            .collect();
        expected.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| a.0.cmp(&b.0))
        });
        for ((id_a, s_a), (id_b, s_b)) in ranked.iter().zip(&expected) {
            assert_eq!(id_a, id_b);
            assert!((s_a - s_b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_empty_candidates_is_empty() {
        let idx = Bm25Index::build(vec![("d1".to_string(), "apple")], DEFAULT_K1, DEFAULT_B);
        assert!(idx.rank(&tokenize("apple"), &[]).unwrap().is_empty());
    }

    #[test]
    fn rank_breaks_zero_ties_by_ascending_id() {
        let idx = Bm25Index::build(
            vec![
                ("b".to_string(), "apple"),
                ("a".to_string(), "banana"),
                ("c".to_string(), "cherry"),
            ],
            DEFAULT_K1,
            DEFAULT_B,
        );
        let ranked = idx
            .rank(&tokenize("melon"), &["b".into(), "a".into(), "c".into()])
            .unwrap();
        let ids: Vec<&str> = ranked.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn tfidf_identical_texts_is_one() {
        let idx = Bm25Index::build(
            vec![
                ("d1".to_string(), "graph neural retrieval"),
                ("d2".to_string(), "dense vectors"),
            ],
            DEFAULT_K1,
            DEFAULT_B,
        );
        let s = idx.tfidf_cosine("graph neural retrieval", "graph neural retrieval");
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tfidf_disjoint_vocabulary_is_zero() {
        let idx = Bm25Index::build(
            vec![
                ("d1".to_string(), "graph neural"),
                ("d2".to_string(), "dense vectors"),
            ],
            DEFAULT_K1,
            DEFAULT_B,
        );
        assert_eq!(idx.tfidf_cosine("graph neural", "dense vectors"), 0.0);
    }

    #[test]
    fn tfidf_matches_explicit_vector_construction() {
        let idx = Bm25Index::build(
            vec![
                ("d1".to_string(), "graph neural retrieval graph"),
                ("d2".to_string(), "dense retrieval vectors"),
                ("d3".to_string(), "neural dense graph"),
            ],
            DEFAULT_K1,
            DEFAULT_B,
        );
        let a = "graph graph neural";
        let b = "graph dense retrieval";
        // Independent dense-vector oracle over the shared vocabulary.
        let vocab = ["dense", "graph", "neural", "retrieval", "vectors"];
        let weight = |text: &str, term: &str| -> f64 {
            let tf = tokenize(text).iter().filter(|t| t == &term).count() as f64;
            if tf == 0.0 {
                return 0.0;
            }
            (1.0 + tf).ln() * idx.idf(term)
        };
        let va: Vec<f64> = vocab.iter().map(|t| weight(a, t)).collect();
        let vb: Vec<f64> = vocab.iter().map(|t| weight(b, t)).collect();
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        let expected = dot / (na * nb);
        assert!((idx.tfidf_cosine(a, b) - expected).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let idx = Bm25Index::build(
            vec![
                ("d1".to_string(), "graph neural retrieval"),
                ("d2".to_string(), "dense vectors"),
            ],
            1.4,
            0.6,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        let loaded = Bm25Index::load(&path).unwrap();
        assert_eq!(loaded.doc_count(), 2);
        assert_eq!(loaded.k1, 1.4);
        let q = tokenize("graph");
        assert_eq!(
            idx.score(&q, "d1").unwrap(),
            loaded.score(&q, "d1").unwrap()
        );
    }

    proptest! {
        /// Increasing a query term's tf while holding doc length fixed never
        /// decreases the score.
        #[test]
        fn score_monotone_in_term_frequency(extra in 1usize..6, filler_len in 6usize..14) {
            let term = "signal";
            let make_doc = |tf: usize, len: usize| {
                let mut words = vec![term; tf];
                // distinct filler tokens keep df(term) stable
                for i in 0..len - tf {
                    words.push(Box::leak(format!("filler{i}").into_boxed_str()));
                }
                words.join(" ")
            };
            let low = make_doc(1, filler_len);
            let high = make_doc(1 + extra, filler_len);
            let idx = Bm25Index::build(
                vec![("low".to_string(), low), ("high".to_string(), high)],
                DEFAULT_K1,
                DEFAULT_B,
            );
            let q = vec![term.to_string()];
            let s_low = idx.score(&q, "low").unwrap();
            let s_high = idx.score(&q, "high").unwrap();
            prop_assert!(s_high >= s_low);
        }

        /// Adding a document containing term t weakly decreases idf(t).
        #[test]
        fn idf_weakly_decreases_with_new_containing_doc(n_docs in 1usize..8) {
            let docs: Vec<(String, String)> = (0..n_docs)
                .map(|i| (format!("d{i}"), format!("shared unique{i}")))
                .collect();
            let idx_before = Bm25Index::build(docs.clone(), DEFAULT_K1, DEFAULT_B);
            let mut more = docs;
            more.push(("extra".to_string(), "shared filler".to_string()));
            let idx_after = Bm25Index::build(more, DEFAULT_K1, DEFAULT_B);
            prop_assert!(idx_after.idf("shared") <= idx_before.idf("shared") + 1e-15);
        }

        /// rank() output is a permutation of its input ids.
        #[test]
        fn rank_is_permutation(ids in proptest::collection::hash_set("[a-z]{1,6}", 1..10)) {
            let docs: Vec<(String, String)> = ids
                .iter()
                .map(|id| (id.clone(), format!("{id} body text")))
                .collect();
            let idx = Bm25Index::build(docs, DEFAULT_K1, DEFAULT_B);
            let candidates: Vec<String> = ids.iter().cloned().collect();
            let ranked = idx.rank(&tokenize("body"), &candidates).unwrap();
            let mut got: Vec<String> = ranked.into_iter().map(|(id, _)| id).collect();
            got.sort();
            let mut want = candidates;
            want.sort();
            prop_assert_eq!(got, want);
        }
    }
}
