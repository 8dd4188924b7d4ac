//! Corpus ingestion, author identity resolution, and the co-authorship
//! graph.
//!
//! Ingestion starts from structured metadata (JSON Lines, one object per
//! paper); PDF parsing and crawling are assumed done upstream. After load
//! the corpus structures are immutable and safe for concurrent reads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clients::{SemanticVerifier, Verdict};
use crate::error::{Error, Result};

/// Coarse subject area tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subarea {
    AI,
    CL,
    CV,
    IR,
    LG,
    OTHER,
}

impl Subarea {
    /// Tolerant parse: optional `cs.` prefix, any case; anything unknown
    /// maps to `OTHER`.
    pub fn parse(tag: &str) -> Subarea {
        let t = tag.trim();
        let t = t
            .strip_prefix("cs.")
            .or_else(|| t.strip_prefix("CS."))
            .unwrap_or(t);
        match t.to_ascii_uppercase().as_str() {
            "AI" => Subarea::AI,
            "CL" => Subarea::CL,
            "CV" => Subarea::CV,
            "IR" => Subarea::IR,
            "LG" => Subarea::LG,
            _ => Subarea::OTHER,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paper {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub author_mention_ids: Vec<String>,
    pub last_revised: NaiveDate,
    pub subarea: Subarea,
}

impl Paper {
    /// Textual representation used for indexing and embedding:
    /// title ⊕ " " ⊕ abstract.
    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.abstract_text)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuthorMention {
    pub mention_id: String,
    pub name: String,
    /// Lowercased and trimmed; `None` when absent or empty.
    pub email: Option<String>,
    /// Whitespace-normalized; `None` when absent or empty.
    pub affiliation: Option<String>,
    pub paper_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Author {
    pub author_id: String,
    pub mention_ids: BTreeSet<String>,
    pub canonical_name: String,
    pub paper_ids: BTreeSet<String>,
}

/// Symmetric, irreflexive co-authorship relation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CoauthorGraph {
    adjacency: BTreeMap<String, BTreeSet<String>>,
}

impl CoauthorGraph {
    pub fn add_node(&mut self, id: &str) {
        self.adjacency.entry(id.to_string()).or_default();
    }

    /// Insert the undirected edge (a, b); self-loops are ignored.
    pub fn add_edge(&mut self, a: &str, b: &str) {
        if a == b {
            return;
        }
        self.adjacency
            .entry(a.to_string())
            .or_default()
            .insert(b.to_string());
        self.adjacency
            .entry(b.to_string())
            .or_default()
            .insert(a.to_string());
    }

    pub fn neighbors(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.adjacency.get(id)
    }

    pub fn are_coauthors(&self, a: &str, b: &str) -> bool {
        self.adjacency.get(a).is_some_and(|n| n.contains(b))
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.adjacency.keys().map(String::as_str)
    }
}

// ---------------------------------------------------------------------------
// ingestion
// ---------------------------------------------------------------------------

/// Why a raw record was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    MalformedJson,
    MissingId,
    MissingTitle,
    MissingAbstract,
    MissingAuthors,
    BadDate,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::MalformedJson => "malformed_json",
            RejectReason::MissingId => "missing_id",
            RejectReason::MissingTitle => "missing_title",
            RejectReason::MissingAbstract => "missing_abstract",
            RejectReason::MissingAuthors => "missing_authors",
            RejectReason::BadDate => "bad_date",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct RejectedRecord {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub reason: RejectReason,
    pub id: Option<String>,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub papers: Vec<Paper>,
    pub mentions: Vec<AuthorMention>,
    pub rejects: Vec<RejectedRecord>,
    /// Valid records dropped because a duplicate id carried a later
    /// `last_revised`.
    pub superseded: usize,
}

#[derive(Deserialize)]
struct RawAuthor {
    name: Option<String>,
    email: Option<String>,
    affiliation: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    authors: Option<Vec<RawAuthor>>,
    last_revised: Option<String>,
    subarea: Option<String>,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

struct PendingPaper {
    order: usize,
    paper: Paper,
    authors: Vec<(String, Option<String>, Option<String>)>,
}

/// Ingest raw metadata records, one JSON object per line.
///
/// Defective records are rejected per line with a reason code and never
/// abort the stream. For duplicate ids only the record with the latest
/// `last_revised` is retained (ties go to the record seen later). Emails
/// are lowercased and trimmed; names and affiliations are
/// whitespace-normalized.
pub fn ingest_papers<R: BufRead>(reader: R) -> Result<IngestOutcome> {
    let mut retained: HashMap<String, PendingPaper> = HashMap::new();
    let mut rejects = Vec::new();
    let mut superseded = 0usize;
    let mut order = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(_) => {
                rejects.push(RejectedRecord {
                    line: lineno,
                    reason: RejectReason::MalformedJson,
                    id: None,
                });
                continue;
            }
        };

        let id = match non_empty(raw.id) {
            Some(id) => id,
            None => {
                rejects.push(RejectedRecord {
                    line: lineno,
                    reason: RejectReason::MissingId,
                    id: None,
                });
                continue;
            }
        };
        let reject = |reason: RejectReason, rejects: &mut Vec<RejectedRecord>| {
            rejects.push(RejectedRecord {
                line: lineno,
                reason,
                id: Some(id.clone()),
            });
        };

        let Some(title) = non_empty(raw.title.map(|t| normalize_ws(&t))) else {
            reject(RejectReason::MissingTitle, &mut rejects);
            continue;
        };
        let Some(abstract_text) = non_empty(raw.abstract_text) else {
            reject(RejectReason::MissingAbstract, &mut rejects);
            continue;
        };
        let authors = raw.authors.unwrap_or_default();
        if authors.is_empty() {
            reject(RejectReason::MissingAuthors, &mut rejects);
            continue;
        }
        let mut normalized_authors = Vec::with_capacity(authors.len());
        let mut bad_author = false;
        for a in authors {
            let Some(name) = non_empty(a.name.map(|n| normalize_ws(&n))) else {
                bad_author = true;
                break;
            };
            let email = non_empty(a.email.map(|e| e.trim().to_lowercase()));
            let affiliation = non_empty(a.affiliation.map(|x| normalize_ws(&x)));
            normalized_authors.push((name, email, affiliation));
        }
        if bad_author {
            reject(RejectReason::MissingAuthors, &mut rejects);
            continue;
        }
        let last_revised = match raw
            .last_revised
            .as_deref()
            .and_then(|d| NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").ok())
        {
            Some(d) => d,
            None => {
                reject(RejectReason::BadDate, &mut rejects);
                continue;
            }
        };
        let subarea = raw
            .subarea
            .as_deref()
            .map_or(Subarea::OTHER, Subarea::parse);

        let paper = Paper {
            id: id.clone(),
            title,
            abstract_text,
            author_mention_ids: Vec::new(),
            last_revised,
            subarea,
        };
        match retained.get_mut(&id) {
            Some(existing) => {
                superseded += 1;
                if last_revised >= existing.paper.last_revised {
                    existing.paper = paper;
                    existing.authors = normalized_authors;
                }
            }
            None => {
                retained.insert(
                    id.clone(),
                    PendingPaper {
                        order,
                        paper,
                        authors: normalized_authors,
                    },
                );
                order += 1;
            }
        }
    }

    let mut pending: Vec<PendingPaper> = retained.into_values().collect();
    pending.sort_by_key(|p| p.order);

    let mut papers = Vec::with_capacity(pending.len());
    let mut mentions = Vec::new();
    for mut p in pending {
        for (idx, (name, email, affiliation)) in p.authors.iter().enumerate() {
            let mention_id = format!("{}#{}", p.paper.id, idx);
            p.paper.author_mention_ids.push(mention_id.clone());
            mentions.push(AuthorMention {
                mention_id,
                name: name.clone(),
                email: email.clone(),
                affiliation: affiliation.clone(),
                paper_id: p.paper.id.clone(),
            });
        }
        papers.push(p.paper);
    }

    Ok(IngestOutcome {
        papers,
        mentions,
        rejects,
        superseded,
    })
}

// ---------------------------------------------------------------------------
// author disambiguation
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct DisambiguationOutcome {
    pub authors: Vec<Author>,
    /// Same-name pairs skipped because the verifier was unavailable.
    pub verifier_skips: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // attach the larger root index under the smaller for determinism
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Resolve author mentions into identities with a precision-oriented
/// hierarchy:
///
/// 1. mentions sharing a non-empty exact email merge;
/// 2. among mentions *without* an email, identical names (case-insensitive)
///    with identical non-empty affiliations merge;
/// 3. remaining same-name, email-less pairs with differing non-empty
///    affiliations go to the semantic verifier and merge only on a positive
///    verdict.
///
/// Mentions with neither email nor affiliation never merge with anything.
/// Tiers 2 and 3 are restricted to email-less mentions so that no resolved
/// author can ever carry two distinct non-empty emails. Merging is
/// transitive, and the result is independent of input order.
///
/// A verifier failure falls back to no-merge for that pair and is counted
/// in `verifier_skips`.
pub fn disambiguate_authors(
    mentions: &[AuthorMention],
    verifier: &dyn SemanticVerifier,
) -> DisambiguationOutcome {
    // Work on a deterministic ordering regardless of caller order.
    let mut idx: Vec<usize> = (0..mentions.len()).collect();
    idx.sort_by(|&a, &b| mentions[a].mention_id.cmp(&mentions[b].mention_id));

    let mut uf = UnionFind::new(mentions.len());

    // Tier 1: exact email.
    let mut by_email: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &idx {
        if let Some(email) = &mentions[i].email {
            by_email.entry(email.as_str()).or_default().push(i);
        }
    }
    for group in by_email.values() {
        for w in group.windows(2) {
            uf.union(w[0], w[1]);
        }
    }

    // Tiers 2 and 3 apply only to email-less mentions with an affiliation.
    let mut by_name: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in &idx {
        let m = &mentions[i];
        if m.email.is_none() && m.affiliation.is_some() {
            by_name.entry(m.name.to_lowercase()).or_default().push(i);
        }
    }

    // Tier 2: exact affiliation within a name group.
    for group in by_name.values() {
        let mut by_aff: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in group {
            by_aff
                .entry(mentions[i].affiliation.as_deref().unwrap())
                .or_default()
                .push(i);
        }
        for sub in by_aff.values() {
            for w in sub.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
    }

    // Tier 3: semantic verification of differing affiliations.
    let mut verifier_skips = 0usize;
    for group in by_name.values() {
        for ai in 0..group.len() {
            for bi in ai + 1..group.len() {
                let (a, b) = (group[ai], group[bi]);
                if uf.find(a) == uf.find(b) {
                    continue;
                }
                let aff_a = mentions[a].affiliation.as_deref().unwrap();
                let aff_b = mentions[b].affiliation.as_deref().unwrap();
                if aff_a == aff_b {
                    continue;
                }
                match verifier.verify(aff_a, aff_b) {
                    Ok(Verdict::Merge) => uf.union(a, b),
                    Ok(Verdict::Distinct) => {}
                    Err(e) => {
                        verifier_skips += 1;
                        log::warn!(
                            "verifier unavailable for mentions {} / {}; keeping distinct: {e}",
                            mentions[a].mention_id,
                            mentions[b].mention_id
                        );
                    }
                }
            }
        }
    }

    // Materialize authors, keyed by the smallest mention id in each set.
    let mut clusters: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in &idx {
        let root = uf.find(i);
        let key = mentions[root].mention_id.clone();
        clusters.entry(key).or_default().push(i);
    }

    let mut authors = Vec::with_capacity(clusters.len());
    for members in clusters.values() {
        let mut mention_ids = BTreeSet::new();
        let mut paper_ids = BTreeSet::new();
        for &i in members {
            mention_ids.insert(mentions[i].mention_id.clone());
            paper_ids.insert(mentions[i].paper_id.clone());
        }
        let author_id = mention_ids.iter().next().unwrap().clone();
        let canonical_name = members
            .iter()
            .map(|&i| &mentions[i])
            .min_by(|a, b| a.mention_id.cmp(&b.mention_id))
            .unwrap()
            .name
            .clone();
        authors.push(Author {
            author_id,
            mention_ids,
            canonical_name,
            paper_ids,
        });
    }
    authors.sort_by(|a, b| a.author_id.cmp(&b.author_id));

    DisambiguationOutcome {
        authors,
        verifier_skips,
    }
}

// ---------------------------------------------------------------------------
// co-authorship graph
// ---------------------------------------------------------------------------

/// Build the co-authorship graph: an edge (a, b) exists iff a ≠ b and some
/// paper lists mentions of both. A mention id on a paper that no author
/// covers is a corpus integrity violation.
pub fn build_coauthor_graph(authors: &[Author], papers: &[Paper]) -> Result<CoauthorGraph> {
    let mut mention_to_author: HashMap<&str, &str> = HashMap::new();
    let mut graph = CoauthorGraph::default();
    for author in authors {
        graph.add_node(&author.author_id);
        for m in &author.mention_ids {
            mention_to_author.insert(m, &author.author_id);
        }
    }
    for paper in papers {
        let mut on_paper = BTreeSet::new();
        for m in &paper.author_mention_ids {
            let author_id = mention_to_author.get(m.as_str()).ok_or_else(|| {
                Error::CorpusIntegrity(format!(
                    "paper {} lists mention {m} that resolves to no author",
                    paper.id
                ))
            })?;
            on_paper.insert(*author_id);
        }
        let ids: Vec<&str> = on_paper.into_iter().collect();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                graph.add_edge(ids[i], ids[j]);
            }
        }
    }
    Ok(graph)
}

// ---------------------------------------------------------------------------
// assembled corpus
// ---------------------------------------------------------------------------

/// Immutable corpus snapshot used by the downstream pipeline.
#[derive(Debug)]
pub struct Corpus {
    pub papers: BTreeMap<String, Paper>,
    pub authors: BTreeMap<String, Author>,
    pub mention_to_author: BTreeMap<String, String>,
    pub graph: CoauthorGraph,
}

impl Corpus {
    pub fn new(papers: Vec<Paper>, authors: Vec<Author>) -> Result<Self> {
        let graph = build_coauthor_graph(&authors, &papers)?;
        let mut mention_to_author = BTreeMap::new();
        for a in &authors {
            for m in &a.mention_ids {
                mention_to_author.insert(m.clone(), a.author_id.clone());
            }
        }
        Ok(Corpus {
            papers: papers.into_iter().map(|p| (p.id.clone(), p)).collect(),
            authors: authors.into_iter().map(|a| (a.author_id.clone(), a)).collect(),
            mention_to_author,
            graph,
        })
    }

    /// Resolved author ids of a paper.
    pub fn paper_authors(&self, paper_id: &str) -> Result<BTreeSet<String>> {
        let paper = self.papers.get(paper_id).ok_or_else(|| Error::UnknownDoc {
            doc_id: paper_id.to_string(),
        })?;
        let mut out = BTreeSet::new();
        for m in &paper.author_mention_ids {
            let a = self.mention_to_author.get(m).ok_or_else(|| {
                Error::CorpusIntegrity(format!("mention {m} resolves to no author"))
            })?;
            out.insert(a.clone());
        }
        Ok(out)
    }

    /// Latest revision date across the corpus; the default profiling
    /// reference date.
    pub fn max_last_revised(&self) -> Option<NaiveDate> {
        self.papers.values().map(|p| p.last_revised).max()
    }
}
