//! Subcommand implementations.
//!
//! Each subcommand reads its declared inputs, writes its declared outputs
//! (with the effective configuration echoed into every artifact header),
//! prints a one-line machine-parseable summary to stdout, and logs progress
//! to stderr. Given identical inputs and seeds, outputs are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use serde_json::json;

use revrank_core::clients::{
    AliasTableVerifier, AlwaysDistinctVerifier, EmbeddingClient, EmbeddingRequest, HttpConfig,
    HttpEmbeddingClient, HttpKeywordClient, KeywordClient, SemanticVerifier, StubEmbeddingClient,
    StubKeywordClient, QUERY_TASK_INSTRUCTION, REVIEWER_TASK_INSTRUCTION,
};
use revrank_core::coi::{coi_filter, CandidatePool};
use revrank_core::corpus::{
    disambiguate_authors, ingest_papers, Author, AuthorMention, Corpus, Paper,
};
use revrank_core::dense::EmbeddingStore;
use revrank_core::error::{Error, Result};
use revrank_core::eval::{
    benchmark_stats, derive_pairs, load_benchmark, precision, ranking_loss,
    validate_against_papers, PreferencePair,
};
use revrank_core::lexical::{Bm25Index, DEFAULT_B, DEFAULT_K1};
use revrank_core::prefgen::{generate_training_set, PreferenceTriplet, View};
use revrank_core::profile::{profile_reviewer, DateWindow, ProfileRecord, ReviewerProfile};
use revrank_core::train::{train_adapter, write_history_csv, AdapterModel, TrainConfig};

use crate::artifacts;
use crate::config::{parse_setting, Effective, FileConfig};
use crate::scorers::{ScoreContext, ScorerKind};

// ---------------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------------

fn load_papers(path: &Path) -> Result<BTreeMap<String, Paper>> {
    let papers: Vec<Paper> = artifacts::read_jsonl(path)?;
    Ok(papers.into_iter().map(|p| (p.id.clone(), p)).collect())
}

fn load_authors(path: &Path) -> Result<Vec<Author>> {
    artifacts::read_jsonl(path)
}

fn load_profiles(path: &Path) -> Result<Vec<ReviewerProfile>> {
    let records: Vec<ProfileRecord> = artifacts::read_jsonl(path)?;
    Ok(records.into_iter().map(ReviewerProfile::from).collect())
}

fn http_config(
    eff: &mut Effective,
    endpoint: String,
    auth_token: Option<String>,
    retries: u32,
    timeout_secs: u64,
) -> HttpConfig {
    let mut config = HttpConfig::new(endpoint);
    config.auth_token = auth_token;
    config.retries = retries;
    config.timeout = Duration::from_secs(timeout_secs);
    eff.pick("retries", Some(retries), None, retries);
    eff.pick("timeout_secs", Some(timeout_secs), None, timeout_secs);
    config
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Backend {
    Stub,
    Http,
}

fn parse_backend(raw: &str) -> Result<Backend> {
    match raw {
        "stub" => Ok(Backend::Stub),
        "http" => Ok(Backend::Http),
        other => Err(Error::Config {
            detail: format!("unknown backend {other:?}; expected stub | http"),
        }),
    }
}

fn parse_coi(raw: &str) -> Result<bool> {
    match raw {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(Error::Config {
            detail: format!("invalid --coi {other:?}; expected on | off"),
        }),
    }
}

fn resolve_reference_date(
    eff: &mut Effective,
    flag: Option<String>,
    file: Option<String>,
    papers: &BTreeMap<String, Paper>,
) -> Result<chrono::NaiveDate> {
    let picked = eff.pick_optional("reference_date", flag, file);
    let date = match picked {
        Some(raw) => chrono::NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|e| {
            Error::Config {
                detail: format!("invalid reference_date: {e}"),
            }
        })?,
        None => {
            let max = papers
                .values()
                .map(|p| p.last_revised)
                .max()
                .ok_or_else(|| Error::CorpusIntegrity("no papers to profile against".into()))?;
            eff.pick("reference_date", Some(max.to_string()), None, max.to_string());
            max
        }
    };
    Ok(date)
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw corpus JSONL (one paper object per line)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output papers artifact
    #[arg(long)]
    pub papers: Option<PathBuf>,
    /// Output author-mentions artifact
    #[arg(long)]
    pub mentions: Option<PathBuf>,
}

pub fn ingest(args: IngestArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let corpus = eff.pick_required("corpus", args.corpus, file.corpus.clone())?;
    let papers_out = eff.pick("papers", args.papers, file.papers.clone(), "papers.jsonl".into());
    let mentions_out = eff.pick(
        "mentions",
        args.mentions,
        file.mentions.clone(),
        "mentions.jsonl".into(),
    );

    let reader = BufReader::new(std::fs::File::open(&corpus)?);
    let outcome = ingest_papers(reader)?;
    for reject in &outcome.rejects {
        log::warn!(
            "rejected line {} ({}): {}",
            reject.line,
            reject.id.as_deref().unwrap_or("<no id>"),
            reject.reason
        );
    }
    let config = eff.to_value();
    artifacts::write_jsonl(&papers_out, "papers", &config, &outcome.papers)?;
    artifacts::write_jsonl(&mentions_out, "mentions", &config, &outcome.mentions)?;
    println!(
        "ingest papers={} mentions={} rejected={} superseded={}",
        outcome.papers.len(),
        outcome.mentions.len(),
        outcome.rejects.len(),
        outcome.superseded
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// disambiguate
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct DisambiguateArgs {
    #[arg(long)]
    pub mentions: Option<PathBuf>,
    #[arg(long)]
    pub authors: Option<PathBuf>,
    /// Semantic verifier stub: aliases | distinct
    #[arg(long)]
    pub verifier: Option<String>,
}

pub fn disambiguate(args: DisambiguateArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let mentions_in = eff.pick_required("mentions", args.mentions, file.mentions.clone())?;
    let authors_out = eff.pick(
        "authors",
        args.authors,
        file.authors.clone(),
        "authors.jsonl".into(),
    );
    let verifier_name = eff.pick(
        "verifier",
        args.verifier,
        file.verifier.clone(),
        "aliases".to_string(),
    );
    let verifier: Box<dyn SemanticVerifier> = match verifier_name.as_str() {
        "aliases" => Box::new(AliasTableVerifier::default()),
        "distinct" => Box::new(AlwaysDistinctVerifier),
        other => {
            return Err(Error::Config {
                detail: format!("unknown verifier {other:?}; expected aliases | distinct"),
            })
        }
    };

    let mentions: Vec<AuthorMention> = artifacts::read_jsonl(&mentions_in)?;
    let outcome = disambiguate_authors(&mentions, verifier.as_ref());
    artifacts::write_jsonl(&authors_out, "authors", &eff.to_value(), &outcome.authors)?;
    println!(
        "disambiguate authors={} verifier_skips={}",
        outcome.authors.len(),
        outcome.verifier_skips
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub papers: Option<PathBuf>,
    #[arg(long)]
    pub authors: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Keywords requested per paper
    #[arg(long)]
    pub n_keywords: Option<usize>,
    /// End of the two-year publication window (YYYY-MM-DD); defaults to
    /// the corpus max last_revised
    #[arg(long)]
    pub reference_date: Option<String>,
    /// Keyword backend: stub | http
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub keyword_endpoint: Option<String>,
    #[arg(long)]
    pub auth_token: Option<String>,
    /// Prompt template file with {title}/{abstract}/{N} placeholders
    #[arg(long)]
    pub prompt_template: Option<PathBuf>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

pub fn profile(args: ProfileArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let papers_in = eff.pick_required("papers", args.papers, file.papers.clone())?;
    let authors_in = eff.pick_required("authors", args.authors, file.authors.clone())?;
    let profiles_out = eff.pick(
        "profiles",
        args.profiles,
        file.profiles.clone(),
        "profiles.jsonl".into(),
    );
    let n_keywords = eff.pick("n_keywords", args.n_keywords, file.n_keywords, 5);
    let backend_name = eff.pick("backend", args.backend, file.backend.clone(), "stub".into());

    let papers = load_papers(&papers_in)?;
    let authors = load_authors(&authors_in)?;
    let reference = resolve_reference_date(&mut eff, args.reference_date, file.reference_date.clone(), &papers)?;
    let window = DateWindow::two_years_ending(reference);

    let client: Box<dyn KeywordClient> = match parse_backend(&backend_name)? {
        Backend::Stub => Box::new(StubKeywordClient),
        Backend::Http => {
            let endpoint = eff.pick_required(
                "keyword_endpoint",
                args.keyword_endpoint,
                file.keyword_endpoint.clone(),
            )?;
            let template_path = eff.pick_required(
                "prompt_template",
                args.prompt_template,
                file.prompt_template.clone(),
            )?;
            let template = std::fs::read_to_string(&template_path)?;
            let auth = eff.pick_optional("auth_token", args.auth_token, file.auth_token.clone());
            let retries = args.retries.or(file.retries).unwrap_or(2);
            let timeout = args.timeout_secs.or(file.timeout_secs).unwrap_or(30);
            let config = http_config(&mut eff, endpoint, auth, retries, timeout);
            Box::new(HttpKeywordClient::new(config, template))
        }
    };

    let mut profiles = Vec::new();
    let mut cold_start = 0usize;
    for author in &authors {
        match profile_reviewer(author, &papers, client.as_ref(), n_keywords, window) {
            Ok(p) => profiles.push(p),
            Err(Error::ColdStartProfile { author_id }) => {
                cold_start += 1;
                log::info!("skipping cold-start reviewer {author_id}");
            }
            Err(e) => return Err(e),
        }
    }
    let records: Vec<ProfileRecord> = profiles.iter().map(ProfileRecord::from).collect();
    artifacts::write_jsonl(&profiles_out, "profiles", &eff.to_value(), &records)?;
    println!(
        "profile profiles={} cold_start={} n_keywords={}",
        profiles.len(),
        cold_start,
        n_keywords
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub papers: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub paper_index: Option<PathBuf>,
    #[arg(long)]
    pub profile_index: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Embedding dimension (stub backend) / expected dimension (http)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Embedding backend: stub | http
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub embedding_endpoint: Option<String>,
    #[arg(long)]
    pub auth_token: Option<String>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

pub fn index(args: IndexArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let papers_in = eff.pick_required("papers", args.papers, file.papers.clone())?;
    let profiles_in = eff.pick_required("profiles", args.profiles, file.profiles.clone())?;
    let paper_index_out = eff.pick(
        "paper_index",
        args.paper_index,
        file.paper_index.clone(),
        "paper_index.json".into(),
    );
    let profile_index_out = eff.pick(
        "profile_index",
        args.profile_index,
        file.profile_index.clone(),
        "profile_index.json".into(),
    );
    let embeddings_out = eff.pick(
        "embeddings",
        args.embeddings,
        file.embeddings.clone(),
        "embeddings.bin".into(),
    );
    let k1 = eff.pick("k1", args.k1, file.k1, DEFAULT_K1);
    let b = eff.pick("b", args.b, file.b, DEFAULT_B);
    let dim = eff.pick("dim", args.dim, file.dim, 64);
    let backend_name = eff.pick("backend", args.backend, file.backend.clone(), "stub".into());

    let papers = load_papers(&papers_in)?;
    let profiles = load_profiles(&profiles_in)?;

    let client: Box<dyn EmbeddingClient> = match parse_backend(&backend_name)? {
        Backend::Stub => Box::new(StubEmbeddingClient::new(dim)),
        Backend::Http => {
            let endpoint = eff.pick_required(
                "embedding_endpoint",
                args.embedding_endpoint,
                file.embedding_endpoint.clone(),
            )?;
            let auth = eff.pick_optional("auth_token", args.auth_token, file.auth_token.clone());
            let retries = args.retries.or(file.retries).unwrap_or(2);
            let timeout = args.timeout_secs.or(file.timeout_secs).unwrap_or(30);
            let config = http_config(&mut eff, endpoint, auth, retries, timeout);
            Box::new(HttpEmbeddingClient::new(config, dim))
        }
    };

    let paper_index = Bm25Index::build(
        papers.values().map(|p| (p.id.clone(), p.text())),
        k1,
        b,
    );
    let profile_index = Bm25Index::build(
        profiles.iter().map(|p| (p.author_id.clone(), p.text.clone())),
        k1,
        b,
    );

    let mut store = EmbeddingStore::new(dim);
    let embed_batch = |ids: &[String], texts: Vec<String>, instruction: &str,
                           store: &mut EmbeddingStore|
     -> Result<()> {
        for (chunk_ids, chunk_texts) in ids.chunks(64).zip(texts.chunks(64)) {
            let resp = client.embed(&EmbeddingRequest {
                texts: chunk_texts.to_vec(),
                task_instruction: instruction.to_string(),
            })?;
            for (id, vector) in chunk_ids.iter().zip(resp.vectors) {
                store.insert(id.clone(), vector)?;
            }
        }
        Ok(())
    };
    let paper_ids: Vec<String> = papers.keys().cloned().collect();
    let paper_texts: Vec<String> = papers.values().map(Paper::text).collect();
    embed_batch(&paper_ids, paper_texts, QUERY_TASK_INSTRUCTION, &mut store)?;
    let profile_ids: Vec<String> = profiles.iter().map(|p| p.author_id.clone()).collect();
    let profile_texts: Vec<String> = profiles.iter().map(|p| p.text.clone()).collect();
    embed_batch(&profile_ids, profile_texts, REVIEWER_TASK_INSTRUCTION, &mut store)?;

    let config = eff.to_value();
    paper_index.save(&paper_index_out)?;
    artifacts::write_meta_sidecar(&paper_index_out, "paper_index", &config)?;
    profile_index.save(&profile_index_out)?;
    artifacts::write_meta_sidecar(&profile_index_out, "profile_index", &config)?;
    store.save(&embeddings_out)?;
    artifacts::write_meta_sidecar(&embeddings_out, "embeddings", &config)?;
    println!(
        "index papers={} profiles={} dim={} k1={} b={}",
        papers.len(),
        profiles.len(),
        dim,
        k1,
        b
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// recall
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct RecallArgs {
    #[arg(long)]
    pub papers: Option<PathBuf>,
    #[arg(long)]
    pub authors: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Query paper id
    #[arg(long)]
    pub query: Option<String>,
    /// Cosine threshold for dense recall (strict >). No default on
    /// purpose: pick one explicitly.
    #[arg(long)]
    pub recall_threshold: Option<f64>,
    /// COI filtering: on | off
    #[arg(long)]
    pub coi: Option<String>,
    #[arg(long)]
    pub pool: Option<PathBuf>,
}

pub fn recall(args: RecallArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let papers_in = eff.pick_required("papers", args.papers, file.papers.clone())?;
    let authors_in = eff.pick_required("authors", args.authors, file.authors.clone())?;
    let embeddings_in = eff.pick_required("embeddings", args.embeddings, file.embeddings.clone())?;
    let query = eff.pick_required("query", args.query, None)?;
    let threshold =
        eff.pick_required("recall_threshold", args.recall_threshold, file.recall_threshold)?;
    let coi_on = parse_coi(&eff.pick("coi", args.coi, file.coi.clone(), "on".into()))?;
    let pool_out = eff.pick("pool", args.pool, file.pool.clone(), "pool.json".into());

    let papers = load_papers(&papers_in)?;
    let authors = load_authors(&authors_in)?;
    let corpus = Corpus::new(papers.values().cloned().collect(), authors)?;
    let store = EmbeddingStore::load(&embeddings_in)?;
    let query_vec = store
        .get(&query)
        .ok_or_else(|| Error::UnknownDoc { doc_id: query.clone() })?
        .to_vec();

    let recalled: BTreeSet<String> = store
        .threshold_recall(&query_vec, threshold)?
        .into_iter()
        .filter(|id| corpus.papers.contains_key(id))
        .collect();

    let mut pool = CandidatePool::new(&query);
    for paper_id in &recalled {
        for author_id in corpus.paper_authors(paper_id)? {
            pool.add(author_id, paper_id.clone());
        }
    }
    let before = pool.candidates.len();
    let pool = if coi_on {
        let query_authors = corpus.paper_authors(&query)?;
        coi_filter(&pool, &query_authors, &corpus.graph)?
    } else {
        pool
    };

    artifacts::write_json(
        &pool_out,
        "candidate_pool",
        &eff.to_value(),
        json!({ "pool": pool }),
    )?;
    println!(
        "recall recalled_papers={} candidates={} after_coi={}",
        recalled.len(),
        before,
        pool.candidates.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// prefgen
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct PrefgenArgs {
    #[arg(long)]
    pub papers: Option<PathBuf>,
    #[arg(long)]
    pub authors: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub paper_index: Option<PathBuf>,
    #[arg(long)]
    pub profile_index: Option<PathBuf>,
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// Triplet budget
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// File of held-out paper ids (one per line) excluded from training
    #[arg(long)]
    pub holdout: Option<PathBuf>,
}

pub fn prefgen(args: PrefgenArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let papers_in = eff.pick_required("papers", args.papers, file.papers.clone())?;
    let authors_in = eff.pick_required("authors", args.authors, file.authors.clone())?;
    let profiles_in = eff.pick_required("profiles", args.profiles, file.profiles.clone())?;
    let paper_index_in =
        eff.pick_required("paper_index", args.paper_index, file.paper_index.clone())?;
    let profile_index_in =
        eff.pick_required("profile_index", args.profile_index, file.profile_index.clone())?;
    let triplets_out = eff.pick(
        "triplets",
        args.triplets,
        file.triplets.clone(),
        "triplets.jsonl".into(),
    );
    let budget = eff.pick("budget", args.budget, file.budget, 1000);
    let seed = eff.pick("seed", args.seed, file.seed, 622);
    let holdout_path = eff.pick_optional("holdout", args.holdout, file.holdout.clone());

    let papers = load_papers(&papers_in)?;
    let authors = load_authors(&authors_in)?;
    let profiles = load_profiles(&profiles_in)?;
    let corpus = Corpus::new(papers.values().cloned().collect(), authors)?;
    let paper_index = Bm25Index::load(&paper_index_in)?;
    let profile_index = Bm25Index::load(&profile_index_in)?;
    let holdout: BTreeSet<String> = match &holdout_path {
        Some(p) => artifacts::read_id_lines(p)?.into_iter().collect(),
        None => BTreeSet::new(),
    };

    let generated = generate_training_set(
        &corpus,
        &profiles,
        &paper_index,
        &profile_index,
        budget,
        seed,
        &holdout,
    )?;
    artifacts::write_jsonl(&triplets_out, "triplets", &eff.to_value(), &generated.triplets)?;
    println!(
        "prefgen triplets={} shortfall={} seed={}",
        generated.triplets.len(),
        generated.shortfall,
        seed
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Adapter rank r
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub lambda_ce: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let triplets_in = eff.pick_required("triplets", args.triplets, file.triplets.clone())?;
    let embeddings_in = eff.pick_required("embeddings", args.embeddings, file.embeddings.clone())?;
    let model_out = eff.pick("model", args.model, file.model.clone(), "model.bin".into());
    let history_out = eff.pick(
        "history",
        args.history,
        file.history.clone(),
        "history.csv".into(),
    );
    let rank = eff.pick("rank", args.rank, file.rank, 16);
    let temperature = eff.pick("temperature", args.temperature, file.temperature, 0.0634);
    let lambda_ce = eff.pick("lambda_ce", args.lambda_ce, file.lambda_ce, 0.915);
    let lr = eff.pick("lr", args.lr, file.lr, 1e-3);
    let epochs = eff.pick("epochs", args.epochs, file.epochs, 15);
    let batch = eff.pick("batch", args.batch, file.batch, 4);
    let patience = eff.pick("patience", args.patience, file.patience, 6);
    let warmup = eff.pick("warmup", args.warmup, file.warmup, 0.05);
    let seed = eff.pick("seed", args.seed, file.seed, 622);

    let triplets: Vec<PreferenceTriplet> = artifacts::read_jsonl(&triplets_in)?;
    let store = EmbeddingStore::load(&embeddings_in)?;
    let mut embeddings: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in &triplets {
        for id in [&t.anchor_id, &t.positive_id, &t.negative_id] {
            if !embeddings.contains_key(id) {
                let v = store
                    .get(id)
                    .ok_or_else(|| Error::MissingEmbedding { id: id.clone() })?;
                embeddings.insert(id.clone(), v.to_vec());
            }
        }
    }

    let model = AdapterModel::init(store.dim(), rank, temperature, lambda_ce, seed);
    let config = TrainConfig {
        learning_rate: lr,
        epochs,
        batch_size: batch,
        warmup_fraction: warmup,
        patience,
        seed,
        ..TrainConfig::default()
    };
    let (best, history) = train_adapter(model, &triplets, &embeddings, &config)?;

    let config_value = eff.to_value();
    best.save(&model_out)?;
    artifacts::write_meta_sidecar(&model_out, "model", &config_value)?;
    write_history_csv(&history_out, &history)?;
    artifacts::write_meta_sidecar(&history_out, "history", &config_value)?;

    let best_row = history
        .iter()
        .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
        .expect("history is never empty");
    println!(
        "train epochs_run={} best_epoch={} best_val={} triplets={}",
        history.len() - 1,
        best_row.epoch,
        best_row.val_loss,
        triplets.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// rank
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub papers: Option<PathBuf>,
    #[arg(long)]
    pub authors: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub paper_index: Option<PathBuf>,
    #[arg(long)]
    pub profile_index: Option<PathBuf>,
    /// Query paper id
    #[arg(long)]
    pub query: Option<String>,
    /// trained-adapter | bm25 | tfidf | pooled-baseline:{mean,p75,max}
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// COI filtering: on | off
    #[arg(long)]
    pub coi: Option<String>,
}

/// Optional artifact paths a scorer may need, straight from the flags.
struct ScorerInputs {
    embeddings: Option<PathBuf>,
    model: Option<PathBuf>,
    paper_index: Option<PathBuf>,
    profile_index: Option<PathBuf>,
}

fn build_score_context(
    eff: &mut Effective,
    kind: ScorerKind,
    papers_in: &Path,
    authors_in: &Path,
    profiles_in: &Path,
    inputs: ScorerInputs,
    file: &FileConfig,
) -> Result<(ScoreContext, Corpus)> {
    let papers = load_papers(papers_in)?;
    let authors = load_authors(authors_in)?;
    let profiles = load_profiles(profiles_in)?;
    let corpus = Corpus::new(papers.values().cloned().collect(), authors.clone())?;

    let needs_store = matches!(kind, ScorerKind::Adapter | ScorerKind::Pooled(_));
    let store = if needs_store {
        let path = eff.pick_required("embeddings", inputs.embeddings, file.embeddings.clone())?;
        Some(EmbeddingStore::load(&path)?)
    } else {
        None
    };
    let model = if matches!(kind, ScorerKind::Adapter) {
        let path = eff.pick_required("model", inputs.model, file.model.clone())?;
        Some(AdapterModel::load(&path)?)
    } else {
        None
    };
    let paper_index = if matches!(kind, ScorerKind::Tfidf | ScorerKind::Bm25) {
        let path = eff.pick_required("paper_index", inputs.paper_index, file.paper_index.clone())?;
        Some(Bm25Index::load(&path)?)
    } else {
        None
    };
    let profile_index = if matches!(kind, ScorerKind::Bm25) {
        let path =
            eff.pick_required("profile_index", inputs.profile_index, file.profile_index.clone())?;
        Some(Bm25Index::load(&path)?)
    } else {
        None
    };
    let window = profiles.first().map(|p| p.window);

    let context = ScoreContext {
        kind,
        papers,
        authors: corpus.authors.clone(),
        profiles: profiles
            .into_iter()
            .map(|p| (p.author_id.clone(), p))
            .collect(),
        store,
        model,
        paper_index,
        profile_index,
        window,
    };
    Ok((context, corpus))
}

pub fn rank(args: RankArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let papers_in = eff.pick_required("papers", args.papers, file.papers.clone())?;
    let authors_in = eff.pick_required("authors", args.authors, file.authors.clone())?;
    let profiles_in = eff.pick_required("profiles", args.profiles, file.profiles.clone())?;
    let query = eff.pick_required("query", args.query, None)?;
    let scorer_name = eff.pick("scorer", args.scorer, file.scorer.clone(), "bm25".into());
    let kind: ScorerKind = parse_setting("scorer", &scorer_name)?;
    let top_k = eff.pick("top_k", args.top_k, file.top_k, 10);
    let coi_on = parse_coi(&eff.pick("coi", args.coi, file.coi.clone(), "on".into()))?;

    let (context, corpus) = build_score_context(
        &mut eff,
        kind,
        &papers_in,
        &authors_in,
        &profiles_in,
        ScorerInputs {
            embeddings: args.embeddings,
            model: args.model,
            paper_index: args.paper_index,
            profile_index: args.profile_index,
        },
        file,
    )?;

    if !corpus.papers.contains_key(&query) {
        return Err(Error::UnknownDoc { doc_id: query });
    }
    let mut candidates: Vec<String> = context.profiles.keys().cloned().collect();
    if coi_on {
        let query_authors = corpus.paper_authors(&query)?;
        candidates.retain(|c| {
            !query_authors.contains(c)
                && !query_authors
                    .iter()
                    .any(|qa| corpus.graph.are_coauthors(qa, c))
        });
    }

    let mut scored = Vec::new();
    let mut skipped = 0usize;
    for candidate in &candidates {
        match context.paper_to_reviewer(&query, candidate)? {
            Some(score) => scored.push((candidate.clone(), score)),
            None => {
                skipped += 1;
                log::warn!("no score for candidate {candidate}; skipping");
            }
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(top_k);
    for (position, (author_id, score)) in scored.iter().enumerate() {
        let name = corpus
            .authors
            .get(author_id)
            .map(|a| a.canonical_name.as_str())
            .unwrap_or("?");
        println!("{}\t{}\t{}\t{}", position + 1, author_id, score, name);
    }
    println!(
        "rank query={} scorer={} candidates={} skipped={} printed={}",
        query,
        kind,
        candidates.len(),
        skipped,
        scored.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// Sidecar papers JSONL for referential integrity
    #[arg(long)]
    pub benchmark_papers: Option<PathBuf>,
    #[arg(long)]
    pub scale_max: Option<u8>,
    #[arg(long)]
    pub papers: Option<PathBuf>,
    #[arg(long)]
    pub authors: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub paper_index: Option<PathBuf>,
    #[arg(long)]
    pub profile_index: Option<PathBuf>,
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

struct ViewMetrics {
    pairs: usize,
    weight: u64,
    loss: f64,
    precision: f64,
}

fn view_metrics(
    pairs: &[PreferencePair],
    scores: &BTreeMap<(String, String), f64>,
) -> Result<Option<ViewMetrics>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let lookup = |a: &str, b: &str| scores.get(&(a.to_string(), b.to_string())).copied();
    Ok(Some(ViewMetrics {
        pairs: pairs.len(),
        weight: pairs.iter().map(|p| p.weight as u64).sum(),
        loss: ranking_loss(pairs, &lookup)?,
        precision: precision(pairs, &lookup)?,
    }))
}

fn metrics_json(m: &Option<ViewMetrics>) -> serde_json::Value {
    match m {
        None => serde_json::Value::Null,
        Some(m) => json!({
            "pairs": m.pairs,
            "weight": m.weight,
            "loss": m.loss,
            "precision": m.precision,
        }),
    }
}

fn metrics_row(view: &str, m: &Option<ViewMetrics>) -> Vec<String> {
    match m {
        None => vec![view.into(), "0".into(), "0".into(), "NA".into(), "NA".into()],
        Some(m) => vec![
            view.into(),
            m.pairs.to_string(),
            m.weight.to_string(),
            m.loss.to_string(),
            m.precision.to_string(),
        ],
    }
}

pub fn eval(args: EvalArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let benchmark_in = eff.pick_required("benchmark", args.benchmark, file.benchmark.clone())?;
    let scale_max = eff.pick("scale_max", args.scale_max, file.scale_max, 5);
    let papers_in = eff.pick_required("papers", args.papers, file.papers.clone())?;
    let authors_in = eff.pick_required("authors", args.authors, file.authors.clone())?;
    let profiles_in = eff.pick_required("profiles", args.profiles, file.profiles.clone())?;
    let scorer_name = eff.pick("scorer", args.scorer, file.scorer.clone(), "bm25".into());
    let kind: ScorerKind = parse_setting("scorer", &scorer_name)?;
    let report_out = eff.pick("report", args.report, file.report.clone(), "report.json".into());
    let sidecar =
        eff.pick_optional("benchmark_papers", args.benchmark_papers, file.benchmark_papers.clone());

    let reader = BufReader::new(std::fs::File::open(&benchmark_in)?);
    let loaded = load_benchmark(reader, scale_max)?;
    if loaded.duplicates_removed > 0 {
        log::info!("removed {} duplicate ratings", loaded.duplicates_removed);
    }
    if let Some(sidecar) = &sidecar {
        let values: Vec<serde_json::Value> = artifacts::read_jsonl(sidecar)?;
        let known: BTreeSet<String> = values
            .iter()
            .filter_map(|v| v.get("id").and_then(|id| id.as_str()).map(str::to_string))
            .collect();
        validate_against_papers(&loaded.records, &known)?;
    }

    let (context, _corpus) = build_score_context(
        &mut eff,
        kind,
        &papers_in,
        &authors_in,
        &profiles_in,
        ScorerInputs {
            embeddings: args.embeddings,
            model: args.model,
            paper_index: args.paper_index,
            profile_index: args.profile_index,
        },
        file,
    )?;

    let pc_pairs = derive_pairs(&loaded.records, View::PaperCentric);
    let rc_pairs = derive_pairs(&loaded.records, View::ReviewerCentric);

    let mut pc_scores: BTreeMap<(String, String), f64> = BTreeMap::new();
    for pair in &pc_pairs {
        for item in [&pair.preferred_id, &pair.other_id] {
            let key = (pair.anchor_id.clone(), item.clone());
            if let std::collections::btree_map::Entry::Vacant(slot) = pc_scores.entry(key) {
                if let Some(s) = context.paper_to_reviewer(&pair.anchor_id, item)? {
                    slot.insert(s);
                }
            }
        }
    }
    let mut rc_scores: BTreeMap<(String, String), f64> = BTreeMap::new();
    for pair in &rc_pairs {
        for item in [&pair.preferred_id, &pair.other_id] {
            let key = (pair.anchor_id.clone(), item.clone());
            if let std::collections::btree_map::Entry::Vacant(slot) = rc_scores.entry(key) {
                if let Some(s) = context.reviewer_to_paper(&pair.anchor_id, item)? {
                    slot.insert(s);
                }
            }
        }
    }

    let pc = view_metrics(&pc_pairs, &pc_scores)?;
    let rc = view_metrics(&rc_pairs, &rc_scores)?;
    let all_pairs: Vec<PreferencePair> =
        pc_pairs.iter().chain(rc_pairs.iter()).cloned().collect();
    let mut all_scores = pc_scores.clone();
    all_scores.extend(rc_scores.clone());
    let overall = view_metrics(&all_pairs, &all_scores)?;

    let config = eff.to_value();
    let payload = json!({
        "scorer": scorer_name,
        "records": loaded.records.len(),
        "overall": metrics_json(&overall),
        "paper_centric": metrics_json(&pc),
        "reviewer_centric": metrics_json(&rc),
    });
    artifacts::write_json(&report_out, "eval_report", &config, payload)?;
    let tsv_path = report_out.with_extension("tsv");
    let mut rows = vec![vec![
        "view".to_string(),
        "pairs".to_string(),
        "weight".to_string(),
        "loss".to_string(),
        "precision".to_string(),
    ]];
    rows.push(metrics_row("overall", &overall));
    rows.push(metrics_row("paper_centric", &pc));
    rows.push(metrics_row("reviewer_centric", &rc));
    artifacts::write_tsv(&tsv_path, &rows)?;

    let overall = overall.expect("benchmark produced at least one pair");
    println!(
        "eval pairs={} loss={} precision={} scorer={}",
        overall.pairs, overall.loss, overall.precision, scorer_name
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    #[arg(long)]
    pub scale_max: Option<u8>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn stats(args: StatsArgs, file: &FileConfig) -> Result<()> {
    let mut eff = Effective::default();
    let benchmark_in = eff.pick_required("benchmark", args.benchmark, file.benchmark.clone())?;
    let scale_max = eff.pick("scale_max", args.scale_max, file.scale_max, 5);
    let report_out = eff.pick("report", args.report, file.report.clone(), "stats.json".into());

    let reader = BufReader::new(std::fs::File::open(&benchmark_in)?);
    let loaded = load_benchmark(reader, scale_max)?;
    let stats = benchmark_stats(&loaded.records, scale_max);

    artifacts::write_json(
        &report_out,
        "benchmark_stats",
        &eff.to_value(),
        json!({ "stats": stats }),
    )?;
    let tsv_path = report_out.with_extension("tsv");
    let mut rows = vec![vec!["panel".to_string(), "key".to_string(), "count".to_string(), "percent".to_string()]];
    for (rating, count) in &stats.rating_counts {
        rows.push(vec![
            "rating".into(),
            rating.to_string(),
            count.to_string(),
            format!("{:.2}", stats.rating_percent[rating]),
        ]);
    }
    for (k, count) in &stats.papers_per_annotator {
        let pct = 100.0 * *count as f64 / stats.annotator_count.max(1) as f64;
        rows.push(vec![
            "papers_per_annotator".into(),
            k.to_string(),
            count.to_string(),
            format!("{pct:.2}"),
        ]);
    }
    for (k, count) in &stats.annotators_per_paper {
        let pct = 100.0 * *count as f64 / stats.paper_count.max(1) as f64;
        rows.push(vec![
            "annotators_per_paper".into(),
            k.to_string(),
            count.to_string(),
            format!("{pct:.2}"),
        ]);
    }
    artifacts::write_tsv(&tsv_path, &rows)?;
    println!(
        "stats records={} annotators={} papers={} duplicates_removed={}",
        stats.total_records,
        stats.annotator_count,
        stats.paper_count,
        loaded.duplicates_removed
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub lambda_ce: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random adapter states to verify
    #[arg(long)]
    pub states: Option<usize>,
    /// Coordinates sampled per state
    #[arg(long)]
    pub coords: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

pub fn gradcheck(args: GradcheckArgs, file: &FileConfig) -> Result<()> {
    use rand::Rng;
    use rand::SeedableRng;

    let mut eff = Effective::default();
    let dim = eff.pick("dim", args.dim, file.dim, 64);
    let rank = eff.pick("rank", args.rank, file.rank, 16);
    let temperature = eff.pick("temperature", args.temperature, file.temperature, 0.0634);
    let lambda_ce = eff.pick("lambda_ce", args.lambda_ce, file.lambda_ce, 0.915);
    let seed = eff.pick("seed", args.seed, file.seed, 622);
    let states = eff.pick("states", args.states, None, 50);
    let coords = eff.pick("coords", args.coords, None, 24);
    let epsilon = eff.pick("epsilon", args.epsilon, None, 1e-5);

    let mut max_err = 0.0f64;
    for state in 0..states as u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (state.wrapping_mul(0x9e37)));
        let a: Vec<f64> = (0..dim * rank).map(|_| rng.random_range(-0.05..0.05)).collect();
        let b: Vec<f64> = (0..dim * rank).map(|_| rng.random_range(-0.05..0.05)).collect();
        let model =
            AdapterModel::with_params(dim, rank, temperature, lambda_ce, seed, a, b)?;
        let mut embeddings = BTreeMap::new();
        let mut triplets = Vec::new();
        for k in 0..3 {
            for role in ["a", "p", "n"] {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                embeddings.insert(
                    format!("{role}{k}"),
                    v.iter().map(|x| x / norm).collect::<Vec<f64>>(),
                );
            }
            triplets.push(PreferenceTriplet {
                anchor_id: format!("a{k}"),
                view: View::PaperCentric,
                positive_id: format!("p{k}"),
                negative_id: format!("n{k}"),
                difficulty: revrank_core::prefgen::Difficulty::Hard,
                s_pos: 2.0,
                s_neg: 1.0,
            });
        }
        let err = revrank_core::train::grad_check(
            &model,
            &triplets,
            &embeddings,
            epsilon,
            coords,
            seed ^ state,
        )?;
        max_err = max_err.max(err);
    }
    println!(
        "gradcheck states={} coords={} epsilon={} max_rel_error={}",
        states, coords, epsilon, max_err
    );
    if max_err > 1e-4 {
        return Err(Error::Contract {
            detail: format!("gradient check failed: max relative error {max_err} > 1e-4"),
        });
    }
    Ok(())
}
