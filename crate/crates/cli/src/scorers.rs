//! Scoring backends for `rank` and `eval`: the trained adapter, BM25,
//! TF-IDF cosine, and pooled dense baselines.

use std::collections::BTreeMap;

use revrank_core::corpus::{Author, Paper};
use revrank_core::dense::{EmbeddingStore, PoolingStrategy};
use revrank_core::error::{Error, Result};
use revrank_core::lexical::{tokenize, Bm25Index};
use revrank_core::profile::{DateWindow, ReviewerProfile};
use revrank_core::train::AdapterModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Adapter,
    Bm25,
    Tfidf,
    Pooled(PoolingStrategy),
}

impl std::str::FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trained-adapter" => Ok(ScorerKind::Adapter),
            "bm25" => Ok(ScorerKind::Bm25),
            "tfidf" => Ok(ScorerKind::Tfidf),
            other => match other.strip_prefix("pooled-baseline:") {
                Some(strategy) => Ok(ScorerKind::Pooled(strategy.parse()?)),
                None => Err(format!(
                    "unknown scorer {other:?}; expected trained-adapter | bm25 | tfidf | pooled-baseline:{{mean,p75,max}}"
                )),
            },
        }
    }
}

impl std::fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScorerKind::Adapter => f.write_str("trained-adapter"),
            ScorerKind::Bm25 => f.write_str("bm25"),
            ScorerKind::Tfidf => f.write_str("tfidf"),
            ScorerKind::Pooled(p) => write!(f, "pooled-baseline:{p}"),
        }
    }
}

/// Everything a scorer may need; construction loads only what the chosen
/// scorer actually uses.
pub struct ScoreContext {
    pub kind: ScorerKind,
    pub papers: BTreeMap<String, Paper>,
    pub authors: BTreeMap<String, Author>,
    pub profiles: BTreeMap<String, ReviewerProfile>,
    pub store: Option<EmbeddingStore>,
    pub model: Option<AdapterModel>,
    pub paper_index: Option<Bm25Index>,
    pub profile_index: Option<Bm25Index>,
    /// Publication window for the pooled baseline, matching the profiles.
    pub window: Option<DateWindow>,
}

impl ScoreContext {
    fn store(&self) -> Result<&EmbeddingStore> {
        self.store.as_ref().ok_or_else(|| missing("embeddings"))
    }

    fn model(&self) -> Result<&AdapterModel> {
        self.model.as_ref().ok_or_else(|| missing("model"))
    }

    fn paper_index(&self) -> Result<&Bm25Index> {
        self.paper_index.as_ref().ok_or_else(|| missing("paper_index"))
    }

    fn profile_index(&self) -> Result<&Bm25Index> {
        self.profile_index.as_ref().ok_or_else(|| missing("profile_index"))
    }

    /// Score with the paper as anchor and the reviewer as candidate.
    pub fn paper_to_reviewer(&self, paper_id: &str, author_id: &str) -> Result<Option<f64>> {
        match self.kind {
            ScorerKind::Adapter => self.adapter_score(paper_id, author_id),
            ScorerKind::Tfidf => self.tfidf_score(paper_id, author_id),
            ScorerKind::Pooled(strategy) => self.pooled_score(paper_id, author_id, strategy),
            ScorerKind::Bm25 => {
                let Some(paper) = self.papers.get(paper_id) else {
                    return Ok(None);
                };
                let index = self.profile_index()?;
                if !index.contains(author_id) {
                    return Ok(None);
                }
                let query = tokenize(&paper.text());
                Ok(Some(index.score(&query, author_id)?))
            }
        }
    }

    /// Score with the reviewer as anchor and the paper as candidate.
    pub fn reviewer_to_paper(&self, author_id: &str, paper_id: &str) -> Result<Option<f64>> {
        match self.kind {
            // These three are symmetric in their inputs.
            ScorerKind::Adapter => self.adapter_score(paper_id, author_id),
            ScorerKind::Tfidf => self.tfidf_score(paper_id, author_id),
            ScorerKind::Pooled(strategy) => self.pooled_score(paper_id, author_id, strategy),
            ScorerKind::Bm25 => {
                let Some(profile) = self.profiles.get(author_id) else {
                    return Ok(None);
                };
                let index = self.paper_index()?;
                if !index.contains(paper_id) {
                    return Ok(None);
                }
                let query = tokenize(&profile.text);
                Ok(Some(index.score(&query, paper_id)?))
            }
        }
    }

    fn adapter_score(&self, paper_id: &str, author_id: &str) -> Result<Option<f64>> {
        let store = self.store()?;
        let model = self.model()?;
        let (Some(q), Some(r)) = (store.get(paper_id), store.get(author_id)) else {
            return Ok(None);
        };
        Ok(Some(model.score(q, r)?))
    }

    fn tfidf_score(&self, paper_id: &str, author_id: &str) -> Result<Option<f64>> {
        let index = self.paper_index()?;
        let (Some(paper), Some(profile)) =
            (self.papers.get(paper_id), self.profiles.get(author_id))
        else {
            return Ok(None);
        };
        Ok(Some(index.tfidf_cosine(&paper.text(), &profile.text)))
    }

    fn pooled_score(
        &self,
        paper_id: &str,
        author_id: &str,
        strategy: PoolingStrategy,
    ) -> Result<Option<f64>> {
        let store = self.store()?;
        let Some(author) = self.authors.get(author_id) else {
            return Ok(None);
        };
        // Restrict the publication history to the profiling window.
        let windowed = Author {
            author_id: author.author_id.clone(),
            mention_ids: author.mention_ids.clone(),
            canonical_name: author.canonical_name.clone(),
            paper_ids: author
                .paper_ids
                .iter()
                .filter(|p| match (self.window, self.papers.get(*p)) {
                    (Some(w), Some(paper)) => w.contains(paper.last_revised),
                    (None, _) => true,
                    (_, None) => false,
                })
                .cloned()
                .collect(),
        };
        match store.baseline_reviewer_score(paper_id, &windowed, strategy) {
            Ok(s) => Ok(Some(s)),
            Err(Error::ColdStartReviewer { .. }) | Err(Error::UnknownDoc { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

fn missing(what: &str) -> Error {
    Error::Config {
        detail: format!("scorer requires --{what}"),
    }
}
