//! Conflict-of-interest filtering of candidate reviewer pools.
//!
//! Only direct (1-hop) co-authorship is excluded; no institutional or 2-hop
//! rules.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::CoauthorGraph;
use crate::error::{Error, Result};

/// Candidate reviewers recalled for one query paper, with the papers that
/// brought each candidate in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query_paper_id: String,
    pub candidates: BTreeSet<String>,
    pub provenance: BTreeMap<String, BTreeSet<String>>,
}

impl CandidatePool {
    pub fn new(query_paper_id: impl Into<String>) -> Self {
        CandidatePool {
            query_paper_id: query_paper_id.into(),
            candidates: BTreeSet::new(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, author_id: impl Into<String>, recalled_paper: impl Into<String>) {
        let author_id = author_id.into();
        self.candidates.insert(author_id.clone());
        self.provenance
            .entry(author_id)
            .or_default()
            .insert(recalled_paper.into());
    }
}

/// Remove from the pool (i) every author of the query paper and (ii) every
/// candidate sharing a direct co-authorship edge with one of them. Pure:
/// the input pool is untouched.
pub fn coi_filter(
    pool: &CandidatePool,
    query_authors: &BTreeSet<String>,
    graph: &CoauthorGraph,
) -> Result<CandidatePool> {
    if query_authors.is_empty() {
        return Err(Error::EmptyQueryAuthors {
            paper_id: pool.query_paper_id.clone(),
        });
    }
    let conflicted = |candidate: &str| -> bool {
        query_authors.contains(candidate)
            || query_authors.iter().any(|qa| graph.are_coauthors(qa, candidate))
    };
    let candidates: BTreeSet<String> = pool
        .candidates
        .iter()
        .filter(|c| !conflicted(c))
        .cloned()
        .collect();
    let provenance = pool
        .provenance
        .iter()
        .filter(|(c, _)| candidates.contains(*c))
        .map(|(c, ps)| (c.clone(), ps.clone()))
        .collect();
    Ok(CandidatePool {
        query_paper_id: pool.query_paper_id.clone(),
        candidates,
        provenance,
    })
}
