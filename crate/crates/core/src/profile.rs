//! Reviewer profiles: a frequency-preserving keyword bag over the
//! reviewer's recent publications, linearized into a single text.
//!
//! Duplicate keywords are deliberately retained when aggregating across
//! papers — recurrence frequency proxies depth of expertise, and the
//! linearization repeats each keyword `count` times so downstream lexical
//! and dense scoring both see the multiplicity.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::clients::{KeywordClient, KeywordRequest};
use crate::corpus::{Author, Paper};
use crate::error::{Error, Result};

/// Fixed prefix of every linearized profile text.
pub const PROFILE_PREFIX: &str = "The reviewer’s research keywords include: ";

/// Hard cap on keyword tokens in the linearized text (after expansion);
/// the lowest-count tail is dropped first.
pub const MAX_PROFILE_KEYWORDS: usize = 512;

/// Inclusive date range selecting the publication history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    /// The two-year window ending at `reference`.
    pub fn two_years_ending(reference: NaiveDate) -> Self {
        let start = reference
            .checked_sub_months(Months::new(24))
            .unwrap_or(NaiveDate::MIN);
        DateWindow {
            start,
            end: reference,
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Multiset of case-folded keywords with per-keyword provenance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeywordBag {
    /// Ordered by descending count, then lexicographically.
    entries: Vec<(String, u32)>,
    provenance: BTreeMap<String, BTreeSet<String>>,
}

impl KeywordBag {
    /// Aggregate per-paper keyword lists, preserving duplicates.
    pub fn from_lists<I, K>(lists: I) -> Self
    where
        I: IntoIterator<Item = (String, K)>,
        K: IntoIterator<Item = String>,
    {
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let mut provenance: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (paper_id, keywords) in lists {
            for kw in keywords {
                let folded = kw.to_lowercase();
                *counts.entry(folded.clone()).or_insert(0) += 1;
                provenance.entry(folded).or_default().insert(paper_id.clone());
            }
        }
        let mut entries: Vec<(String, u32)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        KeywordBag { entries, provenance }
    }

    pub fn from_entries(entries: Vec<(String, u32)>) -> Self {
        let mut bag = KeywordBag {
            entries,
            provenance: BTreeMap::new(),
        };
        bag.entries
            .sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        bag
    }

    pub fn entries(&self) -> &[(String, u32)] {
        &self.entries
    }

    pub fn provenance(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.provenance
    }

    pub fn count(&self, keyword: &str) -> u32 {
        self.entries
            .iter()
            .find(|(k, _)| k == keyword)
            .map_or(0, |(_, c)| *c)
    }

    /// Total keywords extracted (sum of counts).
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, c)| *c as u64).sum()
    }

    /// Expand to the repeated keyword sequence, capped at `limit` tokens.
    fn expand(&self, limit: usize) -> Vec<&str> {
        let mut out = Vec::new();
        'outer: for (kw, count) in &self.entries {
            for _ in 0..*count {
                if out.len() >= limit {
                    break 'outer;
                }
                out.push(kw.as_str());
            }
        }
        out
    }
}

/// A reviewer's keyword bag plus its linearized text form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewerProfile {
    pub author_id: String,
    pub bag: KeywordBag,
    pub text: String,
    pub window: DateWindow,
}

/// JSONL persistence form: `{"author_id", "entries", "text", "window"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub author_id: String,
    pub entries: Vec<(String, u32)>,
    pub text: String,
    pub window: DateWindow,
}

impl From<&ReviewerProfile> for ProfileRecord {
    fn from(p: &ReviewerProfile) -> Self {
        ProfileRecord {
            author_id: p.author_id.clone(),
            entries: p.bag.entries.clone(),
            text: p.text.clone(),
            window: p.window,
        }
    }
}

impl From<ProfileRecord> for ReviewerProfile {
    fn from(r: ProfileRecord) -> Self {
        ReviewerProfile {
            author_id: r.author_id,
            bag: KeywordBag::from_entries(r.entries),
            text: r.text,
            window: r.window,
        }
    }
}

/// Linearize a bag: prefix ⊕ comma-joined expansion (each keyword repeated
/// `count` times, highest counts first, ties lexicographic).
pub fn linearize(bag: &KeywordBag) -> String {
    let expanded = bag.expand(MAX_PROFILE_KEYWORDS);
    format!("{PROFILE_PREFIX}{}", expanded.join(", "))
}

/// Build a reviewer profile from the publications inside `window`.
///
/// Calls `extract_keywords` once per paper; aggregation is a multiset union
/// so the result is independent of paper order. Errors: no papers in the
/// window is a cold start; keyword-client failures propagate with the
/// offending paper id attached.
pub fn profile_reviewer(
    author: &Author,
    papers_by_id: &BTreeMap<String, Paper>,
    keyword_client: &dyn KeywordClient,
    n_keywords: usize,
    window: DateWindow,
) -> Result<ReviewerProfile> {
    let in_window: Vec<&Paper> = author
        .paper_ids
        .iter()
        .filter_map(|id| papers_by_id.get(id))
        .filter(|p| window.contains(p.last_revised))
        .collect();
    if in_window.is_empty() {
        return Err(Error::ColdStartProfile {
            author_id: author.author_id.clone(),
        });
    }
    let mut lists = Vec::with_capacity(in_window.len());
    for paper in in_window {
        let resp = keyword_client
            .extract_keywords(&KeywordRequest {
                title: paper.title.clone(),
                abstract_text: paper.abstract_text.clone(),
                n_keywords,
            })
            .map_err(|e| match e {
                Error::Contract { detail } => Error::Contract {
                    detail: format!("paper {}: {detail}", paper.id),
                },
                other => other,
            })?;
        lists.push((paper.id.clone(), resp.keywords));
    }
    let bag = KeywordBag::from_lists(lists);
    let text = linearize(&bag);
    Ok(ReviewerProfile {
        author_id: author.author_id.clone(),
        bag,
        text,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{KeywordResponse, StubKeywordClient};
    use crate::corpus::Subarea;
    use proptest::prelude::*;

    /// Test client returning a fixed list per paper title.
    struct FixedKeywords(BTreeMap<String, Vec<String>>);

    impl KeywordClient for FixedKeywords {
        fn extract_keywords(&self, req: &KeywordRequest) -> Result<KeywordResponse> {
            Ok(KeywordResponse {
                keywords: self.0.get(&req.title).cloned().unwrap_or_default(),
            })
        }
    }

    fn paper(id: &str, title: &str, date: (i32, u32, u32)) -> Paper {
        Paper {
            id: id.to_string(),
            title: title.to_string(),
            abstract_text: "body text".to_string(),
            author_mention_ids: vec![format!("{id}#0")],
            last_revised: NaiveDate::from_ymd_opt(date.0, date.1, date.2).unwrap(),
            subarea: Subarea::OTHER,
        }
    }

    fn author(id: &str, papers: &[&str]) -> Author {
        Author {
            author_id: id.to_string(),
            mention_ids: papers.iter().map(|p| format!("{p}#0")).collect(),
            canonical_name: id.to_string(),
            paper_ids: papers.iter().map(|p| p.to_string()).collect(),
        }
    }

    fn window_2024() -> DateWindow {
        DateWindow {
            start: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2024, 12, 31).unwrap(),
        }
    }

    #[test]
    fn aggregation_preserves_duplicates_and_orders_by_count() {
        let papers: BTreeMap<String, Paper> = [
            ("p1".to_string(), paper("p1", "t1", (2024, 3, 1))),
            ("p2".to_string(), paper("p2", "t2", (2024, 4, 1))),
        ]
        .into();
        let client = FixedKeywords(
            [
                ("t1".to_string(), vec!["a".to_string(), "b".to_string()]),
                ("t2".to_string(), vec!["b".to_string(), "c".to_string()]),
            ]
            .into(),
        );
        let profile =
            profile_reviewer(&author("r", &["p1", "p2"]), &papers, &client, 2, window_2024())
                .unwrap();
        assert_eq!(profile.bag.count("a"), 1);
        assert_eq!(profile.bag.count("b"), 2);
        assert_eq!(profile.bag.count("c"), 1);
        assert_eq!(
            profile.text,
            "The reviewer’s research keywords include: b, b, a, c"
        );
    }

    #[test]
    fn singleton_profile_text() {
        let papers: BTreeMap<String, Paper> =
            [("p1".to_string(), paper("p1", "t1", (2024, 3, 1)))].into();
        let client = FixedKeywords([("t1".to_string(), vec!["x".to_string()])].into());
        let profile =
            profile_reviewer(&author("r", &["p1"]), &papers, &client, 1, window_2024()).unwrap();
        assert_eq!(profile.text, "The reviewer’s research keywords include: x");
    }

    #[test]
    fn three_paper_fixture_matches_hand_computed_multiset_union() {
        // Stub extractor outputs are deterministic, so the union can be
        // computed by hand from the texts below (stopwords removed,
        // frequency then lexicographic order, top 2 per paper):
        //   p1 "ranking ranking retrieval"    -> [ranking, retrieval]
        //   p2 "retrieval graphs graphs"      -> [graphs, retrieval]
        //   p3 "ranking graphs ranking"       -> [ranking, graphs]
        // union: ranking×2, retrieval×2, graphs×2
        let papers: BTreeMap<String, Paper> = [
            ("p1".to_string(), paper("p1", "ranking ranking retrieval", (2024, 2, 1))),
            ("p2".to_string(), paper("p2", "retrieval graphs graphs", (2024, 3, 1))),
            ("p3".to_string(), paper("p3", "ranking graphs ranking", (2024, 4, 1))),
        ]
        .into();
        // Neutralize the shared abstract so only titles matter.
        let mut papers = papers;
        for p in papers.values_mut() {
            p.abstract_text = "of the and".to_string();
        }
        let profile = profile_reviewer(
            &author("r", &["p1", "p2", "p3"]),
            &papers,
            &StubKeywordClient,
            2,
            window_2024(),
        )
        .unwrap();
        assert_eq!(
            profile.bag.entries(),
            &[
                ("graphs".to_string(), 2),
                ("ranking".to_string(), 2),
                ("retrieval".to_string(), 2)
            ]
        );
        assert_eq!(profile.bag.total(), 6);
    }

    #[test]
    fn empty_window_is_cold_start() {
        let papers: BTreeMap<String, Paper> =
            [("p1".to_string(), paper("p1", "t1", (2019, 1, 1)))].into();
        let err = profile_reviewer(
            &author("r", &["p1"]),
            &papers,
            &StubKeywordClient,
            2,
            window_2024(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ColdStartProfile { .. }));
    }

    #[test]
    fn keywords_are_case_folded() {
        let papers: BTreeMap<String, Paper> =
            [("p1".to_string(), paper("p1", "t1", (2024, 1, 2)))].into();
        let client = FixedKeywords(
            [(
                "t1".to_string(),
                vec!["Graph Learning".to_string(), "graph learning".to_string()],
            )]
            .into(),
        );
        let profile =
            profile_reviewer(&author("r", &["p1"]), &papers, &client, 2, window_2024()).unwrap();
        assert_eq!(profile.bag.count("graph learning"), 2);
    }

    #[test]
    fn linearization_caps_expansion_at_budget() {
        let entries: Vec<(String, u32)> = (0..40)
            .map(|i| (format!("kw{i:02}"), 20u32))
            .collect();
        let bag = KeywordBag::from_entries(entries);
        let text = linearize(&bag);
        let body = text.strip_prefix(PROFILE_PREFIX).unwrap();
        assert_eq!(body.split(", ").count(), MAX_PROFILE_KEYWORDS);
        // Highest-count keywords lead; the tail got dropped.
        assert!(body.starts_with("kw00"));
        assert!(!body.contains("kw39"));
    }

    #[test]
    fn two_year_window_helper() {
        let end = NaiveDate::from_ymd_opt(2025, 10, 15).unwrap();
        let w = DateWindow::two_years_ending(end);
        assert_eq!(w.start, NaiveDate::from_ymd_opt(2023, 10, 15).unwrap());
        assert!(w.contains(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()));
        assert!(!w.contains(NaiveDate::from_ymd_opt(2023, 10, 14).unwrap()));
    }

    #[test]
    fn profile_record_round_trip() {
        let bag = KeywordBag::from_entries(vec![("a".to_string(), 2), ("b".to_string(), 1)]);
        let profile = ReviewerProfile {
            author_id: "r".to_string(),
            text: linearize(&bag),
            bag,
            window: window_2024(),
        };
        let record = ProfileRecord::from(&profile);
        let json = serde_json::to_string(&record).unwrap();
        let back: ProfileRecord = serde_json::from_str(&json).unwrap();
        let restored = ReviewerProfile::from(back);
        assert_eq!(restored.author_id, profile.author_id);
        assert_eq!(restored.bag.entries(), profile.bag.entries());
        assert_eq!(restored.text, profile.text);
    }

    proptest! {
        /// The bag (and hence the text) is invariant under paper order.
        #[test]
        fn aggregation_is_permutation_invariant(perm_seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut ids: Vec<usize> = (0..5).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
            ids.shuffle(&mut rng);
            let make_lists = |order: &[usize]| {
                order
                    .iter()
                    .map(|i| {
                        (
                            format!("p{i}"),
                            vec![format!("kw{}", i % 3), "shared".to_string()],
                        )
                    })
                    .collect::<Vec<_>>()
            };
            let base = KeywordBag::from_lists(make_lists(&[0, 1, 2, 3, 4]));
            let shuffled = KeywordBag::from_lists(make_lists(&ids));
            prop_assert_eq!(base.entries(), shuffled.entries());
            prop_assert_eq!(linearize(&base), linearize(&shuffled));
        }

        /// Extending the window never decreases any keyword count.
        #[test]
        fn window_extension_is_monotone(extra_months in 1u32..18) {
            let papers: BTreeMap<String, Paper> = (0..6)
                .map(|i| {
                    let month = (i % 12) + 1;
                    let year = 2023 + i / 12;
                    (
                        format!("p{i}"),
                        paper(&format!("p{i}"), &format!("topic{} shared", i % 2), (year, month as u32, 3)),
                    )
                })
                .collect();
            let ids: Vec<&str> = papers.keys().map(String::as_str).collect();
            let a = author("r", &ids);
            let end = NaiveDate::from_ymd_opt(2023, 6, 30).unwrap();
            let narrow = DateWindow {
                start: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
                end,
            };
            let wide = DateWindow {
                start: narrow.start,
                end: end.checked_add_months(Months::new(extra_months)).unwrap(),
            };
            let p_narrow = profile_reviewer(&a, &papers, &StubKeywordClient, 2, narrow);
            let p_wide = profile_reviewer(&a, &papers, &StubKeywordClient, 2, wide).unwrap();
            if let Ok(p_narrow) = p_narrow {
                for (kw, count) in p_narrow.bag.entries() {
                    prop_assert!(p_wide.bag.count(kw) >= *count);
                }
            }
        }
    }
}
