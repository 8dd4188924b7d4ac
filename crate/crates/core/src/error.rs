//! Crate-wide error type.

use thiserror::Error;

/// Broad class of a failure, used by callers (the CLI) to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad usage or configuration: missing/invalid settings.
    Usage,
    /// Bad input data or a violated operation contract.
    Data,
    /// An external service (embedding / keyword endpoint) failed.
    External,
}

#[derive(Debug, Error)]
pub enum Error {
    // --- corpus ---
    #[error("corpus integrity violation: {0}")]
    CorpusIntegrity(String),

    // --- clients ---
    #[error("transport failure talking to {endpoint} after {attempts} attempt(s): {detail}")]
    Transport {
        endpoint: String,
        attempts: u32,
        detail: String,
    },
    #[error("service reply violated its contract: {detail}")]
    Contract { detail: String },

    // --- profile / dense ---
    #[error("reviewer {author_id} has no publications inside the profiling window")]
    ColdStartProfile { author_id: String },
    #[error("reviewer {author_id} has no embedded publications to pool")]
    ColdStartReviewer { author_id: String },

    // --- lexical / dense ---
    #[error("document {doc_id} is not present in the index")]
    UnknownDoc { doc_id: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("cannot insert non-finite or zero vector for {doc_id}")]
    BadVector { doc_id: String },
    #[error("cannot pool an empty similarity list")]
    EmptyPool,

    // --- coi ---
    #[error("query paper {paper_id} has no authors; refusing to COI-filter")]
    EmptyQueryAuthors { paper_id: String },

    // --- prefgen ---
    #[error("anchor {anchor_id} has empty text; cannot rank candidates")]
    EmptyAnchorText { anchor_id: String },

    // --- train ---
    #[error("no embedding available for id {id}")]
    MissingEmbedding { id: String },
    #[error("cannot train on an empty triplet list")]
    EmptyTriplets,
    #[error("positive candidate {id} is absent from the in-batch candidate set")]
    PositiveNotInBatch { id: String },
    #[error("non-finite loss at step {step} (triplets: {triplet_ids:?})")]
    NonFiniteLoss {
        step: usize,
        triplet_ids: Vec<String>,
    },

    // --- eval ---
    #[error("missing predicted score for pair (anchor {anchor}, {preferred} vs {other})")]
    MissingScore {
        anchor: String,
        preferred: String,
        other: String,
    },
    #[error("empty preference pair set; metrics are undefined")]
    EmptyPairs,
    #[error("record {line}: rating {rating} outside 1..={scale_max}")]
    RatingOutOfRange {
        line: usize,
        rating: i64,
        scale_max: u8,
    },
    #[error("benchmark references unknown paper id {paper_id}")]
    UnknownBenchmarkPaper { paper_id: String },

    // --- configuration ---
    #[error("configuration error: {detail}")]
    Config { detail: String },

    // --- persistence / io ---
    #[error("file format error in {path}: {detail}")]
    FileFormat { path: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Classify for exit-code mapping: transport failures are external,
    /// configuration problems are usage, everything else is a
    /// data/contract problem.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Transport { .. } => ErrorClass::External,
            Error::Config { .. } => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
