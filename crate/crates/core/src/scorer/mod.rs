//! Token-level log-probability backends.
//!
//! [`Scorer`] is the single abstraction the pipeline talks to. Three
//! implementations ship with the crate: [`RemoteScorer`] speaks the HTTP wire
//! protocol in [`protocol`], [`SyntheticScorer`] realizes a closed-form bias
//! model for tests and demos, and [`CachedScorer`] persists any backend's
//! responses on disk.

mod cache;
mod generate;
pub mod protocol;
mod remote;
mod synthetic;

pub use cache::{CacheStats, CachedScorer};
pub use generate::{Generator, SyntheticGenerator};
pub use remote::{RemoteScorer, RetryPolicy};
pub use synthetic::{QueryFacts, SyntheticScorer, SyntheticScorerSpec};

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricsError, TokenScoreVector};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("non-finite or positive log-probability in backend response: {0}")]
    NonFiniteScore(String),
    #[error("continuation must be non-empty")]
    EmptyContinuation,
    #[error("invalid synthetic scorer spec: {0}")]
    InvalidSpec(String),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

/// One scoring call: `continuation` conditioned on `prefix`. An empty prefix
/// requests the unconditional score.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRequest {
    prefix: String,
    continuation: String,
}

impl ScoreRequest {
    pub fn new(prefix: impl Into<String>, continuation: impl Into<String>) -> Result<Self, ScorerError> {
        let continuation = continuation.into();
        if continuation.is_empty() {
            return Err(ScorerError::EmptyContinuation);
        }
        Ok(Self { prefix: prefix.into(), continuation })
    }

    pub fn unconditional(continuation: impl Into<String>) -> Result<Self, ScorerError> {
        Self::new("", continuation)
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn continuation(&self) -> &str {
        &self.continuation
    }

    pub fn is_unconditional(&self) -> bool {
        self.prefix.is_empty()
    }
}

/// Token IDs of the continuation with their log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub tokens: Vec<u32>,
    pub scores: TokenScoreVector,
}

impl ScoreResponse {
    /// Checks the protocol invariants of a raw reply.
    pub fn from_parts(tokens: Vec<u32>, logprobs: Vec<f64>) -> Result<Self, ScorerError> {
        if tokens.len() != logprobs.len() {
            return Err(ScorerError::ProtocolViolation(format!(
                "{} tokens but {} log-probabilities",
                tokens.len(),
                logprobs.len()
            )));
        }
        let scores = TokenScoreVector::new(logprobs).map_err(|e| match e {
            MetricsError::EmptySequence => ScorerError::EmptyContinuation,
            other => ScorerError::NonFiniteScore(other.to_string()),
        })?;
        Ok(Self { tokens, scores })
    }
}

pub trait Scorer: Send + Sync {
    /// Stable identity of the model + tokenizer; part of every cache key.
    fn backend_id(&self) -> String;

    fn tokenize(&self, text: &str) -> Result<Vec<u32>, ScorerError>;

    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn tokenize(&self, text: &str) -> Result<Vec<u32>, ScorerError> {
        (**self).tokenize(text)
    }
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        (**self).score(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn tokenize(&self, text: &str) -> Result<Vec<u32>, ScorerError> {
        (**self).tokenize(text)
    }
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        (**self).score(request)
    }
}

/// Wraps a scorer and counts backend traffic. Mostly useful in tests and for
/// run statistics.
pub struct CountingScorer<S> {
    inner: S,
    scores: AtomicUsize,
    tokenizes: AtomicUsize,
}

impl<S: Scorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, scores: AtomicUsize::new(0), tokenizes: AtomicUsize::new(0) }
    }

    pub fn score_calls(&self) -> usize {
        self.scores.load(Ordering::Relaxed)
    }

    pub fn tokenize_calls(&self) -> usize {
        self.tokenizes.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>, ScorerError> {
        self.tokenizes.fetch_add(1, Ordering::Relaxed);
        self.inner.tokenize(text)
    }

    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        self.scores.fetch_add(1, Ordering::Relaxed);
        self.inner.score(request)
    }
}
