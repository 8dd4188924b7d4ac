//! Wire-level interfaces to external embedding and LLM services, plus
//! deterministic in-repo stubs so the entire pipeline runs offline.
//!
//! No other module performs network I/O; everything external flows through
//! here. Stub backends are pure functions of their inputs and reproduce
//! bitwise across runs and machines.
//!
//! Wire protocol (HTTP backends): JSON over POST.
//! - embedding endpoint: request is [`EmbeddingRequest`] verbatim, response
//!   is [`EmbeddingResponse`] verbatim.
//! - keyword endpoint: request is `{"prompt": <rendered template>}` aimed at
//!   a completion-style service, response is `{"reply": <raw text>}`; the
//!   client renders the prompt template and parses the comma-separated
//!   reply itself.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexical::tokenize;

/// Task instruction attached to query-paper embedding requests.
pub const QUERY_TASK_INSTRUCTION: &str = "Given a submission title and abstract, retrieve \
reviewers whose expertise profile matches and who are familiar with the work.";

/// Task instruction attached to reviewer-profile embedding requests.
pub const REVIEWER_TASK_INSTRUCTION: &str =
    "Given a reviewer profile, retrieve papers that match the reviewer's expertise.";

/// Fixed stopword list used by the stub keyword extractor. Pinned: changing
/// it changes every stub-derived artifact.
pub const STOPWORDS: [&str; 50] = [
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "for",
    "from", "has", "have", "in", "is", "it", "its", "more", "not", "of", "on", "or", "our",
    "such", "that", "the", "their", "them", "then", "these", "they", "this", "to", "under",
    "us", "was", "we", "were", "what", "when", "which", "while", "with", "within", "without",
    "you", "your",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub texts: Vec<String>,
    pub task_instruction: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

impl EmbeddingResponse {
    /// Check the response invariants against the request that produced it.
    fn validate(&self, expected_texts: usize) -> Result<()> {
        if self.vectors.len() != expected_texts {
            return Err(Error::Contract {
                detail: format!(
                    "{} vectors returned for {} texts",
                    self.vectors.len(),
                    expected_texts
                ),
            });
        }
        for v in &self.vectors {
            if v.len() != self.dim {
                return Err(Error::Contract {
                    detail: format!("vector of length {} (dim is {})", v.len(), self.dim),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Contract {
                    detail: "non-finite component in embedding vector".to_string(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordRequest {
    pub title: String,
    pub abstract_text: String,
    pub n_keywords: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordResponse {
    pub keywords: Vec<String>,
}

/// Embedding service interface. Implementations are stateless after
/// configuration and safe for concurrent use.
pub trait EmbeddingClient: Send + Sync {
    fn embed(&self, req: &EmbeddingRequest) -> Result<EmbeddingResponse>;
    fn dim(&self) -> usize;
}

/// Keyword-extraction service interface.
pub trait KeywordClient: Send + Sync {
    fn extract_keywords(&self, req: &KeywordRequest) -> Result<KeywordResponse>;
}

/// Verdict of a semantic identity check between two author mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Merge,
    Distinct,
}

/// Pluggable semantic verifier for same-name, different-affiliation author
/// pairs. The stub implementations are deterministic.
pub trait SemanticVerifier: Send + Sync {
    fn verify(&self, affiliation_a: &str, affiliation_b: &str) -> Result<Verdict>;
}

// ---------------------------------------------------------------------------
// stub backends
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic hash-bag embedding: each token FNV-1a hashed into one of
/// `dim` buckets with weight +1, then L2-normalized. Identical text gives an
/// identical vector; lexical overlap orders cosine similarity.
#[derive(Debug, Clone)]
pub struct StubEmbeddingClient {
    pub dim: usize,
}

impl Default for StubEmbeddingClient {
    fn default() -> Self {
        StubEmbeddingClient { dim: 64 }
    }
}

impl StubEmbeddingClient {
    pub fn new(dim: usize) -> Self {
        StubEmbeddingClient { dim }
    }

    fn embed_one(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let bucket = (fnv1a_64(token.as_bytes()) % self.dim as u64) as usize;
            v[bucket] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Contract {
                detail: format!("text {text:?} produced no tokens to embed"),
            });
        }
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }
}

impl EmbeddingClient for StubEmbeddingClient {
    fn embed(&self, req: &EmbeddingRequest) -> Result<EmbeddingResponse> {
        let vectors = req
            .texts
            .iter()
            .map(|t| self.embed_one(t))
            .collect::<Result<Vec<_>>>()?;
        let resp = EmbeddingResponse {
            vectors,
            dim: self.dim,
        };
        resp.validate(req.texts.len())?;
        Ok(resp)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Deterministic keyword extractor: the `n_keywords` highest-frequency
/// non-stopword tokens of title ⊕ abstract, ties broken lexicographically.
#[derive(Debug, Clone, Default)]
pub struct StubKeywordClient;

impl KeywordClient for StubKeywordClient {
    fn extract_keywords(&self, req: &KeywordRequest) -> Result<KeywordResponse> {
        let text = format!("{} {}", req.title, req.abstract_text);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for token in tokenize(&text) {
            if STOPWORDS.contains(&token.as_str()) {
                continue;
            }
            *counts.entry(token).or_insert(0) += 1;
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let keywords: Vec<String> = ranked
            .into_iter()
            .take(req.n_keywords)
            .map(|(t, _)| t)
            .collect();
        if keywords.is_empty() {
            return Err(Error::Contract {
                detail: "no non-stopword tokens to extract keywords from".to_string(),
            });
        }
        Ok(KeywordResponse { keywords })
    }
}

/// Verifier that never merges. The precision-maximizing default.
#[derive(Debug, Clone, Default)]
pub struct AlwaysDistinctVerifier;

impl SemanticVerifier for AlwaysDistinctVerifier {
    fn verify(&self, _a: &str, _b: &str) -> Result<Verdict> {
        Ok(Verdict::Distinct)
    }
}

/// Verifier backed by a fixed table of institution aliases. Comparison is
/// case-insensitive on whitespace-normalized names.
#[derive(Debug, Clone)]
pub struct AliasTableVerifier {
    aliases: Vec<(String, String)>,
}

impl Default for AliasTableVerifier {
    fn default() -> Self {
        AliasTableVerifier::new(&[
            ("MIT", "Massachusetts Institute of Technology"),
            ("CMU", "Carnegie Mellon University"),
            ("Alibaba Group", "Alibaba Inc."),
            ("Dept. of CS, Stanford", "Stanford"),
        ])
    }
}

impl AliasTableVerifier {
    pub fn new(pairs: &[(&str, &str)]) -> Self {
        AliasTableVerifier {
            aliases: pairs
                .iter()
                .map(|(a, b)| (canon(a), canon(b)))
                .collect(),
        }
    }
}

fn canon(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl SemanticVerifier for AliasTableVerifier {
    fn verify(&self, a: &str, b: &str) -> Result<Verdict> {
        let (ca, cb) = (canon(a), canon(b));
        if ca == cb {
            return Ok(Verdict::Merge);
        }
        for (x, y) in &self.aliases {
            if (ca == *x && cb == *y) || (ca == *y && cb == *x) {
                return Ok(Verdict::Merge);
            }
        }
        Ok(Verdict::Distinct)
    }
}

/// Verifier that always fails, for exercising the no-merge fallback path.
#[derive(Debug, Clone, Default)]
pub struct UnavailableVerifier;

impl SemanticVerifier for UnavailableVerifier {
    fn verify(&self, _a: &str, _b: &str) -> Result<Verdict> {
        Err(Error::Transport {
            endpoint: "verifier".to_string(),
            attempts: 1,
            detail: "verifier unavailable".to_string(),
        })
    }
}

// ---------------------------------------------------------------------------
// HTTP backends
// ---------------------------------------------------------------------------

/// Connection settings shared by the HTTP backends.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub auth_token: Option<String>,
    /// Retries after the first attempt.
    pub retries: u32,
    pub timeout: Duration,
    pub retry_backoff: Duration,
    /// Upper bound on concurrent in-flight requests through one client.
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            auth_token: None,
            retries: 2,
            timeout: Duration::from_secs(30),
            retry_backoff: Duration::from_millis(100),
            max_in_flight: 8,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct InFlightGate {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl InFlightGate {
    fn new(limit: usize) -> Self {
        InFlightGate {
            slots: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap();
        }
        *slots -= 1;
        drop(slots);
        let out = f();
        *self.slots.lock().unwrap() += 1;
        self.freed.notify_one();
        out
    }
}

fn post_json_with_retry<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    config: &HttpConfig,
    body: &Req,
) -> Result<Resp> {
    let attempts = config.retries + 1;
    let mut last_err = String::new();
    for attempt in 0..attempts {
        if attempt > 0 && !config.retry_backoff.is_zero() {
            std::thread::sleep(config.retry_backoff);
        }
        let mut req = agent.post(&config.endpoint);
        if let Some(token) = &config.auth_token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => match resp.body_mut().read_json::<Resp>() {
                Ok(parsed) => return Ok(parsed),
                Err(e) => last_err = format!("malformed response body: {e}"),
            },
            Err(e) => last_err = e.to_string(),
        }
        log::warn!(
            "request to {} failed (attempt {}/{}): {}",
            config.endpoint,
            attempt + 1,
            attempts,
            last_err
        );
    }
    Err(Error::Transport {
        endpoint: config.endpoint.clone(),
        attempts,
        detail: last_err,
    })
}

/// Embedding service over HTTP POST.
pub struct HttpEmbeddingClient {
    config: HttpConfig,
    agent: ureq::Agent,
    gate: InFlightGate,
    dim: usize,
}

impl HttpEmbeddingClient {
    pub fn new(config: HttpConfig, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let gate = InFlightGate::new(config.max_in_flight);
        HttpEmbeddingClient {
            config,
            agent,
            gate,
            dim,
        }
    }
}

impl EmbeddingClient for HttpEmbeddingClient {
    fn embed(&self, req: &EmbeddingRequest) -> Result<EmbeddingResponse> {
        let resp: EmbeddingResponse = self
            .gate
            .run(|| post_json_with_retry(&self.agent, &self.config, req))?;
        resp.validate(req.texts.len())?;
        if resp.dim != self.dim {
            return Err(Error::Contract {
                detail: format!("endpoint returned dim {}, configured {}", resp.dim, self.dim),
            });
        }
        Ok(resp)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Serialize)]
struct PromptEnvelope<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct ReplyEnvelope {
    reply: String,
}

/// Render a keyword-extraction prompt template. Placeholders: `{title}`,
/// `{abstract}`, `{N}`.
pub fn render_keyword_prompt(template: &str, req: &KeywordRequest) -> String {
    template
        .replace("{title}", &req.title)
        .replace("{abstract}", &req.abstract_text)
        .replace("{N}", &req.n_keywords.to_string())
}

/// Parse a comma-separated keyword reply: split on commas, trim, drop empty
/// segments.
pub fn parse_keyword_reply(reply: &str, n_keywords: usize) -> Result<Vec<String>> {
    let keywords: Vec<String> = reply
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if keywords.is_empty() {
        return Err(Error::Contract {
            detail: format!("reply is not a comma-separated keyword list: {reply:?}"),
        });
    }
    if keywords.len() > n_keywords {
        // The service over-delivered; keep the first N to honor the request.
        return Ok(keywords.into_iter().take(n_keywords).collect());
    }
    Ok(keywords)
}

/// Keyword extraction over HTTP POST against a completion-style endpoint.
pub struct HttpKeywordClient {
    config: HttpConfig,
    agent: ureq::Agent,
    gate: InFlightGate,
    template: String,
}

impl HttpKeywordClient {
    pub fn new(config: HttpConfig, template: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let gate = InFlightGate::new(config.max_in_flight);
        HttpKeywordClient {
            config,
            agent,
            gate,
            template: template.into(),
        }
    }
}

impl KeywordClient for HttpKeywordClient {
    fn extract_keywords(&self, req: &KeywordRequest) -> Result<KeywordResponse> {
        let prompt = render_keyword_prompt(&self.template, req);
        let envelope = PromptEnvelope { prompt: &prompt };
        let resp: ReplyEnvelope = self
            .gate
            .run(|| post_json_with_retry(&self.agent, &self.config, &envelope))?;
        let keywords = parse_keyword_reply(&resp.reply, req.n_keywords)?;
        Ok(KeywordResponse { keywords })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn stub_embedding_is_deterministic() {
        let stub = StubEmbeddingClient::default();
        let req = EmbeddingRequest {
            texts: vec!["x marks the spot".to_string()],
            task_instruction: String::new(),
        };
        let a = stub.embed(&req).unwrap();
        let b = stub.embed(&req).unwrap();
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn stub_embedding_is_unit_norm() {
        let stub = StubEmbeddingClient::default();
        let req = EmbeddingRequest {
            texts: vec!["graph neural networks for dense retrieval".to_string()],
            task_instruction: String::new(),
        };
        let resp = stub.embed(&req).unwrap();
        let norm: f64 = resp.vectors[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stub_embedding_orders_lexical_overlap() {
        // Two texts sharing 9/10 tokens must be closer than token-disjoint
        // texts.
        let stub = StubEmbeddingClient::default();
        let base = "alpha bravo charlie delta echo foxtrot golf hotel india juliett";
        let near = "alpha bravo charlie delta echo foxtrot golf hotel india kilo";
        let far = "lima mike november oscar papa quebec romeo sierra tango uniform";
        let req = EmbeddingRequest {
            texts: vec![base.to_string(), near.to_string(), far.to_string()],
            task_instruction: String::new(),
        };
        let resp = stub.embed(&req).unwrap();
        let sim_near = cosine(&resp.vectors[0], &resp.vectors[1]);
        let sim_far = cosine(&resp.vectors[0], &resp.vectors[2]);
        assert!(
            sim_near > sim_far,
            "overlap ordering violated: {sim_near} vs {sim_far}"
        );
    }

    #[test]
    fn stub_embedding_rejects_tokenless_text() {
        let stub = StubEmbeddingClient::default();
        let req = EmbeddingRequest {
            texts: vec!["a I x".to_string()],
            task_instruction: String::new(),
        };
        assert!(matches!(stub.embed(&req), Err(Error::Contract { .. })));
    }

    #[test]
    fn stub_keywords_by_frequency_then_lexicographic() {
        let stub = StubKeywordClient;
        let resp = stub
            .extract_keywords(&KeywordRequest {
                title: "graph graph neural retrieval".to_string(),
                abstract_text: String::new(),
                n_keywords: 2,
            })
            .unwrap();
        // graph appears twice; neural and retrieval tie at one, and the tie
        // breaks lexicographically.
        assert_eq!(resp.keywords, vec!["graph", "neural"]);
    }

    #[test]
    fn stub_keywords_skip_stopwords() {
        let stub = StubKeywordClient;
        let resp = stub
            .extract_keywords(&KeywordRequest {
                title: "the the the ranking".to_string(),
                abstract_text: "of of of".to_string(),
                n_keywords: 3,
            })
            .unwrap();
        assert_eq!(resp.keywords, vec!["ranking"]);
    }

    #[test]
    fn parse_well_formed_list() {
        assert_eq!(parse_keyword_reply("a, b, c", 3).unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn parse_drops_empty_segments() {
        assert_eq!(parse_keyword_reply("a,,b", 3).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn parse_rejects_empty_reply() {
        assert!(matches!(
            parse_keyword_reply(" , ,", 3),
            Err(Error::Contract { .. })
        ));
    }

    #[test]
    fn render_prompt_fills_placeholders() {
        let t = "T={title} A={abstract} N={N}";
        let req = KeywordRequest {
            title: "Foo".to_string(),
            abstract_text: "Bar".to_string(),
            n_keywords: 7,
        };
        assert_eq!(render_keyword_prompt(t, &req), "T=Foo A=Bar N=7");
    }

    #[test]
    fn alias_verifier_merges_known_variants() {
        let v = AliasTableVerifier::default();
        assert_eq!(
            v.verify("MIT", "Massachusetts Institute of Technology")
                .unwrap(),
            Verdict::Merge
        );
        assert_eq!(v.verify("MIT", "Stanford").unwrap(), Verdict::Distinct);
    }

    #[test]
    fn stopword_list_is_pinned_at_50() {
        assert_eq!(STOPWORDS.len(), 50);
    }
}
