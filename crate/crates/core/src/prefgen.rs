//! Annotation-free preference triplets from BM25 rankings.
//!
//! For an anchor (a query paper or a reviewer profile) the top-ranked
//! candidate becomes the positive; negatives are the candidates whose
//! scores land nearest one-tenth (easy) and one-third (hard) of the
//! positive score. Anchors without enough positively-scored candidates emit
//! nothing — precision over recall.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lexical::{tokenize, Bm25Index};
use crate::profile::ReviewerProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    PaperCentric,
    ReviewerCentric,
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            View::PaperCentric => "paper_centric",
            View::ReviewerCentric => "reviewer_centric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Hard,
}

/// One training unit: anchor, positive, negative, with the BM25 scores that
/// selected them. Invariant: `s_pos > s_neg > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTriplet {
    pub anchor_id: String,
    pub view: View,
    pub positive_id: String,
    pub negative_id: String,
    pub difficulty: Difficulty,
    pub s_pos: f64,
    pub s_neg: f64,
}

/// Apply the selection rule to an already-ranked candidate list (descending
/// score, ties by ascending id).
///
/// Emits at most two triplets (easy, then hard). Requires at least three
/// positively-scored candidates; negatives are drawn from candidates with
/// `0 < score < s_pos`, each minimizing the distance to its target ratio
/// with ties broken by ascending id. When both targets resolve to the same
/// candidate only the hard triplet is emitted.
pub fn select_from_ranked(
    anchor_id: &str,
    view: View,
    ranked: &[(String, f64)],
) -> Vec<PreferenceTriplet> {
    let positives: Vec<&(String, f64)> = ranked.iter().filter(|(_, s)| *s > 0.0).collect();
    if positives.len() < 3 {
        return Vec::new();
    }
    let (positive_id, s_pos) = (&positives[0].0, positives[0].1);
    let pool: Vec<&(String, f64)> = positives
        .iter()
        .skip(1)
        .filter(|(_, s)| *s < s_pos)
        .copied()
        .collect();
    if pool.is_empty() {
        return Vec::new();
    }

    let nearest = |target: f64| -> &(String, f64) {
        let mut best = pool[0];
        let mut best_dist = (best.1 - target).abs();
        for cand in pool.iter().skip(1) {
            let dist = (cand.1 - target).abs();
            if dist < best_dist || (dist == best_dist && cand.0 < best.0) {
                best = cand;
                best_dist = dist;
            }
        }
        best
    };

    let easy = nearest(s_pos / 10.0);
    let hard = nearest(s_pos / 3.0);

    let triplet = |difficulty: Difficulty, neg: &(String, f64)| PreferenceTriplet {
        anchor_id: anchor_id.to_string(),
        view,
        positive_id: positive_id.clone(),
        negative_id: neg.0.clone(),
        difficulty,
        s_pos,
        s_neg: neg.1,
    };

    if easy.0 == hard.0 {
        vec![triplet(Difficulty::Hard, hard)]
    } else {
        vec![triplet(Difficulty::Easy, easy), triplet(Difficulty::Hard, hard)]
    }
}

/// Rank `candidates` against the anchor text with BM25 and select triplets.
///
/// `excluded` must contain the anchor and any leakage-prone ids (held-out
/// papers); candidates must already be COI-filtered in the paper-centric
/// view.
pub fn build_triplets(
    anchor_id: &str,
    anchor_text: &str,
    view: View,
    candidates: &[String],
    index: &Bm25Index,
    excluded: &BTreeSet<String>,
) -> Result<Vec<PreferenceTriplet>> {
    let query = tokenize(anchor_text);
    if query.is_empty() {
        return Err(Error::EmptyAnchorText {
            anchor_id: anchor_id.to_string(),
        });
    }
    let eligible: Vec<String> = candidates
        .iter()
        .filter(|c| c.as_str() != anchor_id && !excluded.contains(*c))
        .cloned()
        .collect();
    let ranked = index.rank(&query, &eligible)?;
    Ok(select_from_ranked(anchor_id, view, &ranked))
}

#[derive(Debug)]
pub struct GeneratedTriplets {
    pub triplets: Vec<PreferenceTriplet>,
    /// How far short of the requested budget the corpus fell.
    pub shortfall: usize,
}

/// Generate a training set by sampling anchors without replacement,
/// alternating the two views, until `budget` triplets are emitted or both
/// anchor lists are exhausted.
///
/// Paper-centric candidate sets are COI-filtered against the anchor's
/// authors. No emitted triplet references a holdout paper: holdout papers
/// are excluded both as anchors and as candidates. Deterministic for a
/// fixed seed.
pub fn generate_training_set(
    corpus: &Corpus,
    profiles: &[ReviewerProfile],
    paper_index: &Bm25Index,
    profile_index: &Bm25Index,
    budget: usize,
    seed: u64,
    holdout: &BTreeSet<String>,
) -> Result<GeneratedTriplets> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut paper_anchors: Vec<&str> = corpus
        .papers
        .keys()
        .filter(|id| !holdout.contains(*id))
        .map(String::as_str)
        .collect();
    paper_anchors.shuffle(&mut rng);
    let mut reviewer_anchors: Vec<&ReviewerProfile> = profiles.iter().collect();
    reviewer_anchors.sort_by(|a, b| a.author_id.cmp(&b.author_id));
    reviewer_anchors.shuffle(&mut rng);

    let reviewer_ids: Vec<String> = {
        let mut ids: Vec<String> = profiles.iter().map(|p| p.author_id.clone()).collect();
        ids.sort();
        ids
    };
    let paper_ids: Vec<String> = corpus
        .papers
        .keys()
        .filter(|id| !holdout.contains(*id))
        .cloned()
        .collect();

    let mut triplets = Vec::new();
    let mut papers_it = paper_anchors.into_iter();
    let mut reviewers_it = reviewer_anchors.into_iter();
    let mut next_is_paper = true;

    while triplets.len() < budget {
        let produced = if next_is_paper {
            match papers_it.next() {
                Some(paper_id) => {
                    let paper = &corpus.papers[paper_id];
                    let query_authors = corpus.paper_authors(paper_id)?;
                    let candidates: Vec<String> = reviewer_ids
                        .iter()
                        .filter(|r| {
                            !query_authors.contains(*r)
                                && !query_authors
                                    .iter()
                                    .any(|qa| corpus.graph.are_coauthors(qa, r))
                        })
                        .cloned()
                        .collect();
                    let mut excluded: BTreeSet<String> = holdout.clone();
                    excluded.insert(paper_id.to_string());
                    Some(build_triplets(
                        paper_id,
                        &paper.text(),
                        View::PaperCentric,
                        &candidates,
                        profile_index,
                        &excluded,
                    )?)
                }
                None => None,
            }
        } else {
            match reviewers_it.next() {
                Some(profile) => {
                    let mut excluded: BTreeSet<String> = holdout.clone();
                    excluded.insert(profile.author_id.clone());
                    Some(build_triplets(
                        &profile.author_id,
                        &profile.text,
                        View::ReviewerCentric,
                        &paper_ids,
                        paper_index,
                        &excluded,
                    )?)
                }
                None => None,
            }
        };
        next_is_paper = !next_is_paper;

        match produced {
            Some(batch) => {
                for t in batch {
                    if triplets.len() < budget {
                        triplets.push(t);
                    }
                }
            }
            None => {
                // This side is exhausted; stop once the other side is too.
                let other_exhausted = if next_is_paper {
                    papers_it.len() == 0
                } else {
                    reviewers_it.len() == 0
                };
                if other_exhausted {
                    break;
                }
            }
        }
    }

    let shortfall = budget.saturating_sub(triplets.len());
    if shortfall > 0 {
        log::warn!(
            "triplet budget {budget} not attainable; generated {}",
            triplets.len()
        );
    }
    Ok(GeneratedTriplets { triplets, shortfall })
}
