//! Document retrieval over API records: Okapi BM25, a pluggable embedding
//! provider, and the ground-truth oracle.
//!
//! Every record is one document. BM25 term scoring:
//!
//!   idf(t) = ln((N - df_t + 0.5) / (df_t + 0.5) + 1)
//!   tf_part = tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len))
//!
//! The +1 inside the log keeps idf non-negative, so very common terms never
//! produce negative scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalExample;
use crate::registry::{ApiDatabase, ApiRecord};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// A ranked retrieval answer: (doc id, score) pairs with non-increasing
/// scores, at most `k` of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub ranked: Vec<(String, f64)>,
    pub k: usize,
}

impl RetrievalResult {
    pub fn top(&self) -> Option<&str> {
        self.ranked.first().map(|(id, _)| id.as_str())
    }
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// The text that stands in for a record during retrieval: all ten
/// documentation fields joined with single spaces.
pub fn document_text(record: &ApiRecord) -> String {
    let mut parts: Vec<String> = vec![
        record.domain.clone(),
        record.framework.clone(),
        record.functionality.clone(),
        record.api_name.clone(),
        record.api_call.clone(),
    ];
    parts.extend(record.api_arguments.iter().map(|a| a.name.clone()));
    parts.push(record.environment_requirements.clone());
    parts.push(record.example_code.clone());
    for group in &record.performance {
        parts.push(group.dataset.clone());
        for (metric, value) in &group.metrics {
            parts.push(metric.clone());
            parts.push(format!("{value}"));
        }
    }
    parts.push(record.description.clone());
    parts.retain(|p| !p.is_empty());
    parts.join(" ")
}

/// Inverted index with the document statistics Okapi BM25 needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    /// term -> (doc position, term frequency), positions ascending.
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.doc_ids
            .iter()
            .position(|id| id == doc_id)
            .map(|i| self.doc_lengths[i])
    }

    pub fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        let Some(pos) = self.doc_ids.iter().position(|id| id == doc_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|list| list.iter().find(|(d, _)| *d == pos))
            .map(|(_, tf)| *tf)
            .unwrap_or(0)
    }

    pub fn params(&self) -> (f64, f64) {
        (self.k1, self.b)
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map(|l| l.len()).unwrap_or(0) as f64;
        let n = self.doc_count() as f64;
        (((n - df + 0.5) / (df + 0.5)) + 1.0).ln().max(0.0)
    }
}

/// Indexes every record of the database as one document with the default
/// Okapi parameters (k1 = 1.2, b = 0.75).
pub fn build_bm25(db: &ApiDatabase) -> Result<Bm25Index> {
    build_bm25_with(db, DEFAULT_K1, DEFAULT_B)
}

pub fn build_bm25_with(db: &ApiDatabase, k1: f64, b: f64) -> Result<Bm25Index> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
    let mut doc_ids = Vec::with_capacity(db.len());
    let mut doc_lengths = Vec::with_capacity(db.len());
    for (pos, record) in db.records().iter().enumerate() {
        let tokens = tokenize(&document_text(record));
        doc_lengths.push(tokens.len() as u32);
        doc_ids.push(record.id.clone());
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push((pos, tf));
        }
    }
    let avg_doc_length = doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / db.len() as f64;
    Ok(Bm25Index {
        postings,
        doc_ids,
        doc_lengths,
        avg_doc_length,
        k1,
        b,
    })
}

/// Scores every document against the query and returns the top `k`, ties
/// broken by ascending doc id. A query with no recognizable tokens yields
/// an empty result. Repeated query tokens accumulate.
pub fn bm25_retrieve(index: &Bm25Index, query: &str, k: usize) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".to_string()));
    }
    let tokens = tokenize(query);
    if tokens.is_empty() {
        return Ok(RetrievalResult { ranked: vec![], k });
    }
    let mut scores = vec![0.0f64; index.doc_count()];
    for token in &tokens {
        let idf = index.idf(token);
        if let Some(list) = index.postings.get(token) {
            for &(doc, tf) in list {
                let tf = tf as f64;
                let len = index.doc_lengths[doc] as f64;
                let norm = 1.0 - index.b + index.b * len / index.avg_doc_length;
                scores[doc] += idf * (tf * (index.k1 + 1.0)) / (tf + index.k1 * norm);
            }
        }
    }
    Ok(rank(&index.doc_ids, &scores, k))
}

fn rank(doc_ids: &[String], scores: &[f64], k: usize) -> RetrievalResult {
    let mut order: Vec<usize> = (0..doc_ids.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| doc_ids[a].cmp(&doc_ids[b]))
    });
    RetrievalResult {
        ranked: order
            .into_iter()
            .take(k)
            .map(|i| (doc_ids[i].clone(), scores[i]))
            .collect(),
        k,
    }
}

/// A deterministic text-to-vector encoder.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Offline embedding mock: hashed bag of words over the retrieval
/// tokenizer, using FNV-1a so vectors are stable across runs and builds.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    dimension: usize,
}

impl HashedBagOfWords {
    pub fn new(dimension: usize) -> Self {
        HashedBagOfWords { dimension }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl EmbeddingProvider for HashedBagOfWords {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            let bucket = (fnv1a(token.as_bytes()) % self.dimension as u64) as usize;
            v[bucket] += 1.0;
        }
        Ok(v)
    }
}

/// Remote embedding endpoint: POST {model, input} and read back a vector
/// list. The bearer token comes from the environment variable named in the
/// config, so keys never live in files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteEmbeddingConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub dimension: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

pub struct RemoteEmbeddingClient {
    config: RemoteEmbeddingConfig,
    http: reqwest::blocking::Client,
}

impl RemoteEmbeddingClient {
    pub fn new(config: RemoteEmbeddingConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Backend {
                message: e.to_string(),
                status: None,
                retriable: false,
            })?;
        Ok(RemoteEmbeddingClient { config, http })
    }
}

impl EmbeddingProvider for RemoteEmbeddingClient {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let key = std::env::var(&self.config.api_key_env).map_err(|_| Error::Backend {
            message: format!("environment variable {} is not set", self.config.api_key_env),
            status: None,
            retriable: false,
        })?;
        let body = serde_json::json!({
            "model": self.config.model,
            "input": [text],
        });
        let response = self
            .http
            .post(&self.config.base_url)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| Error::Backend {
                message: e.to_string(),
                status: None,
                retriable: true,
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Backend {
                message: format!("embedding request failed: {}", status),
                status: Some(status.as_u16()),
                retriable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let parsed: serde_json::Value = response.json().map_err(|e| Error::Backend {
            message: e.to_string(),
            status: Some(status.as_u16()),
            retriable: false,
        })?;
        let vector: Vec<f64> = parsed["data"][0]["embedding"]
            .as_array()
            .map(|xs| xs.iter().filter_map(|x| x.as_f64()).collect())
            .ok_or_else(|| Error::Backend {
                message: "response carried no embedding vector".to_string(),
                status: Some(status.as_u16()),
                retriable: false,
            })?;
        if vector.len() != self.config.dimension {
            return Err(Error::Backend {
                message: format!(
                    "embedding has dimension {} but the config declares {}",
                    vector.len(),
                    self.config.dimension
                ),
                status: Some(status.as_u16()),
                retriable: false,
            });
        }
        Ok(vector)
    }
}

/// Cosine similarity with the zero-norm convention: any zero vector has
/// similarity 0 to everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Ranks documents by cosine similarity between the query embedding and
/// each document-text embedding; ties broken by ascending doc id.
pub fn embed_retrieve(
    db: &ApiDatabase,
    provider: &dyn EmbeddingProvider,
    query: &str,
    k: usize,
) -> Result<RetrievalResult> {
    if provider.dimension() < 1 {
        return Err(Error::Invalid(
            "embedding dimension must be at least 1".to_string(),
        ));
    }
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".to_string()));
    }
    let query_vec = provider.embed(query)?;
    let mut doc_ids = Vec::with_capacity(db.len());
    let mut scores = Vec::with_capacity(db.len());
    for record in db.records() {
        let doc_vec = provider
            .embed(&document_text(record))
            .map_err(|e| Error::EmbeddingFailure {
                doc_id: record.id.clone(),
                message: e.to_string(),
            })?;
        doc_ids.push(record.id.clone());
        scores.push(cosine(&query_vec, &doc_vec));
    }
    Ok(rank(&doc_ids, &scores, k))
}

/// The oracle retriever: always returns the example's own reference
/// document with score 1, the retrieval upper bound.
pub fn oracle_retrieve(example: &EvalExample, db: &ApiDatabase) -> Result<RetrievalResult> {
    let record = db.get(&example.reference_id)?;
    Ok(RetrievalResult {
        ranked: vec![(record.id.clone(), 1.0)],
        k: 1,
    })
}
