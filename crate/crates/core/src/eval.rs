//! Benchmark loading, preference-pair derivation, the expertise-aligned
//! ranking loss, precision, and benchmark statistics.
//!
//! The ranking loss uses a strict indicator, so tied predicted scores incur
//! no loss; precision also uses a strict comparison, so ties count as
//! incorrect there. The asymmetry is intentional — both formulas are
//! applied literally. Do not "fix" it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prefgen::View;

/// One rated (paper, reviewer) record, rating on a 1..=scale_max scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub paper_id: String,
    pub reviewer_id: String,
    pub rating: u8,
}

#[derive(Debug)]
pub struct LoadedBenchmark {
    pub records: Vec<BenchmarkRecord>,
    /// Duplicate (paper, reviewer) entries dropped, keeping the last seen.
    pub duplicates_removed: usize,
}

#[derive(Deserialize)]
struct RawBenchmarkRecord {
    paper_id: String,
    reviewer_id: String,
    rating: i64,
}

/// Load benchmark records from JSONL `{"paper_id","reviewer_id","rating"}`.
///
/// Ratings outside `1..=scale_max` are a hard error. Duplicate
/// (paper, reviewer) pairs keep the last occurrence.
pub fn load_benchmark<R: BufRead>(reader: R, scale_max: u8) -> Result<LoadedBenchmark> {
    let mut by_key: BTreeMap<(String, String), (usize, BenchmarkRecord)> = BTreeMap::new();
    let mut duplicates_removed = 0usize;
    let mut order = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawBenchmarkRecord = serde_json::from_str(&line)?;
        if raw.rating < 1 || raw.rating > scale_max as i64 {
            return Err(Error::RatingOutOfRange {
                line: lineno + 1,
                rating: raw.rating,
                scale_max,
            });
        }
        let record = BenchmarkRecord {
            paper_id: raw.paper_id,
            reviewer_id: raw.reviewer_id,
            rating: raw.rating as u8,
        };
        let key = (record.paper_id.clone(), record.reviewer_id.clone());
        match by_key.get_mut(&key) {
            Some((_, existing)) => {
                duplicates_removed += 1;
                *existing = record;
            }
            None => {
                by_key.insert(key, (order, record));
                order += 1;
            }
        }
    }
    let mut entries: Vec<(usize, BenchmarkRecord)> = by_key.into_values().collect();
    entries.sort_by_key(|(ord, _)| *ord);
    Ok(LoadedBenchmark {
        records: entries.into_iter().map(|(_, r)| r).collect(),
        duplicates_removed,
    })
}

/// Referential-integrity check against a sidecar set of known paper ids.
pub fn validate_against_papers(
    records: &[BenchmarkRecord],
    known_papers: &BTreeSet<String>,
) -> Result<()> {
    for r in records {
        if !known_papers.contains(&r.paper_id) {
            return Err(Error::UnknownBenchmarkPaper {
                paper_id: r.paper_id.clone(),
            });
        }
    }
    Ok(())
}

/// One ordered preference derived from two ratings that differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub anchor_id: String,
    pub preferred_id: String,
    pub other_id: String,
    /// `|ε_preferred − ε_other|`, at least 1 (ties are discarded).
    pub weight: u32,
    pub view: View,
}

/// Derive preference pairs: paper-centric groups by paper and pairs
/// reviewers with differing ratings; reviewer-centric groups by reviewer
/// and pairs papers. Each unordered rating-differing pair yields exactly
/// one `PreferencePair`; ties yield none.
pub fn derive_pairs(records: &[BenchmarkRecord], view: View) -> Vec<PreferencePair> {
    let mut groups: BTreeMap<&str, Vec<(&str, u8)>> = BTreeMap::new();
    for r in records {
        let (anchor, item) = match view {
            View::PaperCentric => (r.paper_id.as_str(), r.reviewer_id.as_str()),
            View::ReviewerCentric => (r.reviewer_id.as_str(), r.paper_id.as_str()),
        };
        groups.entry(anchor).or_default().push((item, r.rating));
    }
    let mut pairs = Vec::new();
    for (anchor, mut members) in groups {
        members.sort_by(|a, b| a.0.cmp(b.0));
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (item_i, rating_i) = members[i];
                let (item_j, rating_j) = members[j];
                if rating_i == rating_j {
                    continue;
                }
                let (preferred, other, weight) = if rating_i > rating_j {
                    (item_i, item_j, rating_i - rating_j)
                } else {
                    (item_j, item_i, rating_j - rating_i)
                };
                pairs.push(PreferencePair {
                    anchor_id: anchor.to_string(),
                    preferred_id: preferred.to_string(),
                    other_id: other.to_string(),
                    weight: weight as u32,
                    view,
                });
            }
        }
    }
    pairs
}

/// Predicted score lookup for (anchor, item); `None` marks a missing score.
pub type ScoreFn<'a> = dyn Fn(&str, &str) -> Option<f64> + 'a;

fn pair_scores(pair: &PreferencePair, scores: &ScoreFn) -> Result<(f64, f64)> {
    let missing = || Error::MissingScore {
        anchor: pair.anchor_id.clone(),
        preferred: pair.preferred_id.clone(),
        other: pair.other_id.clone(),
    };
    let s_pref = scores(&pair.anchor_id, &pair.preferred_id).ok_or_else(missing)?;
    let s_other = scores(&pair.anchor_id, &pair.other_id).ok_or_else(missing)?;
    Ok((s_pref, s_other))
}

/// Normalized expertise-aligned ranking loss in [0, 1]:
/// `Σ weight·I(s_preferred < s_other) / Σ weight` with a strict indicator.
pub fn ranking_loss(pairs: &[PreferencePair], scores: &ScoreFn) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut penalty = 0u64;
    let mut total = 0u64;
    for pair in pairs {
        let (s_pref, s_other) = pair_scores(pair, scores)?;
        total += pair.weight as u64;
        if s_pref < s_other {
            penalty += pair.weight as u64;
        }
    }
    Ok(penalty as f64 / total as f64)
}

/// Fraction of pairs ranked correctly (strictly); equal scores count as
/// incorrect.
pub fn precision(pairs: &[PreferencePair], scores: &ScoreFn) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut correct = 0usize;
    for pair in pairs {
        let (s_pref, s_other) = pair_scores(pair, scores)?;
        if s_pref > s_other {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Coverage, supervision density, and rating distribution of a benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkStats {
    pub total_records: usize,
    pub rating_counts: BTreeMap<u8, usize>,
    pub rating_percent: BTreeMap<u8, f64>,
    pub annotator_count: usize,
    /// k → number of annotators who rated exactly k papers.
    pub papers_per_annotator: BTreeMap<usize, usize>,
    pub paper_count: usize,
    /// k → number of papers rated by exactly k annotators.
    pub annotators_per_paper: BTreeMap<usize, usize>,
}

pub fn benchmark_stats(records: &[BenchmarkRecord], scale_max: u8) -> BenchmarkStats {
    let total = records.len();
    let mut rating_counts: BTreeMap<u8, usize> = (1..=scale_max).map(|r| (r, 0)).collect();
    let mut per_annotator: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut per_paper: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        *rating_counts.entry(r.rating).or_insert(0) += 1;
        per_annotator
            .entry(&r.reviewer_id)
            .or_default()
            .insert(&r.paper_id);
        per_paper
            .entry(&r.paper_id)
            .or_default()
            .insert(&r.reviewer_id);
    }
    let rating_percent = rating_counts
        .iter()
        .map(|(&r, &c)| {
            let pct = if total == 0 {
                0.0
            } else {
                100.0 * c as f64 / total as f64
            };
            (r, pct)
        })
        .collect();
    let mut papers_per_annotator: BTreeMap<usize, usize> = BTreeMap::new();
    for papers in per_annotator.values() {
        *papers_per_annotator.entry(papers.len()).or_insert(0) += 1;
    }
    let mut annotators_per_paper: BTreeMap<usize, usize> = BTreeMap::new();
    for annotators in per_paper.values() {
        *annotators_per_paper.entry(annotators.len()).or_insert(0) += 1;
    }
    BenchmarkStats {
        total_records: total,
        rating_counts,
        rating_percent,
        annotator_count: per_annotator.len(),
        papers_per_annotator,
        paper_count: per_paper.len(),
        annotators_per_paper,
    }
}
