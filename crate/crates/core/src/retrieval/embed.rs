use std::time::Duration;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use super::RetrievalError;

pub const DEFAULT_DIM: usize = 4096;

/// Dense embedding, L2-normalized unless the input had no features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length; an all-zero input stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::Embedding("embedding has zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::Embedding("embedding has non-finite entries".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cosine similarity (both sides are unit vectors).
    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

fn bucket(term: &str, dim: usize) -> (usize, f64) {
    let h = xxh3_64(term.as_bytes());
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    ((h % dim as u64) as usize, sign)
}

/// Bag-of-words TF-IDF with signed feature hashing.
///
/// Document frequencies are counted per hash bucket over the fitting corpus;
/// an unfitted embedder uses unit IDF everywhere.
#[derive(Debug, Clone)]
pub struct HashedTfIdf {
    dim: usize,
    idf: Vec<f64>,
}

impl Default for HashedTfIdf {
    fn default() -> Self {
        Self::unfitted(DEFAULT_DIM)
    }
}

impl HashedTfIdf {
    pub fn unfitted(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, idf: vec![1.0; dim] }
    }

    /// Smoothed IDF `ln((1 + N) / (1 + df)) + 1` over `docs`.
    pub fn fit<'a>(dim: usize, docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df = vec![0u32; dim];
        let mut n = 0u32;
        let mut seen = Vec::new();
        for doc in docs {
            n += 1;
            seen.clear();
            seen.extend(terms(doc).map(|t| bucket(&t, dim).0));
            seen.sort_unstable();
            seen.dedup();
            for &b in &seen {
                df[b] += 1;
            }
        }
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Self { dim, idf }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Embedder for HashedTfIdf {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let mut v = vec![0.0; self.dim];
        for t in terms(text) {
            let (b, sign) = bucket(&t, self.dim);
            v[b] += sign;
        }
        for (x, idf) in v.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        EmbeddingVector::normalized(v)
    }
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedReply {
    embedding: Vec<f64>,
}

/// Client for `POST /v1/embed {"text"} -> {"embedding": [float]}`.
pub struct RemoteEmbedder {
    url: String,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str) -> Self {
        Self {
            url: format!("{}/v1/embed", base_url.trim_end_matches('/')),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let body = serde_json::to_string(&EmbedBody { text }).expect("body serializes");
        let resp = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&body)
            .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))?;
        let reply: EmbedReply = resp
            .into_json()
            .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))?;
        EmbeddingVector::normalized(reply.embedding)
    }
}
