use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::{xxh3_64, xxh3_64_with_seed};

use super::{ScoreRequest, ScoreResponse, Scorer, ScorerError};

/// What the synthetic backend knows about a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFacts {
    pub domain: String,
    /// The annotation that "matches" this query.
    pub answer: String,
}

/// Closed-form bias model:
///
/// * unconditional loss `L(y) = b(y)`
/// * conditional loss `L(y|x) = b(y) · m(d(x)) · μ · jitter`, with
///   `μ = mu_clean` when `y` is the matching answer of `x` and `mu_noisy`
///   otherwise, and `jitter = exp(noise_sigma · z)`, `z ~ N(0, 1)` derived
///   from `(seed, prefix, continuation)`.
///
/// Annotations missing from `base_loss` get a hashed `b(y)` in `[0.5, 2.0)`.
/// Queries missing from `queries` use multiplier `1.0` and never match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScorerSpec {
    #[serde(default)]
    pub base_loss: BTreeMap<String, f64>,
    #[serde(default)]
    pub domain_multiplier: BTreeMap<String, f64>,
    #[serde(default)]
    pub queries: BTreeMap<String, QueryFacts>,
    pub mu_clean: f64,
    pub mu_noisy: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticScorerSpec {
    pub fn validate(&self) -> Result<(), ScorerError> {
        let bad = |m: String| Err(ScorerError::InvalidSpec(m));
        if !(self.mu_clean > 0.0 && self.mu_clean.is_finite()) {
            return bad(format!("mu_clean must be positive, got {}", self.mu_clean));
        }
        if !(self.mu_noisy > self.mu_clean && self.mu_noisy.is_finite()) {
            return bad(format!("mu_noisy ({}) must exceed mu_clean ({})", self.mu_noisy, self.mu_clean));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if let Some((k, v)) = self.base_loss.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return bad(format!("base_loss[{k:?}] = {v} is not positive"));
        }
        if let Some((k, v)) = self.domain_multiplier.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return bad(format!("domain_multiplier[{k:?}] = {v} is not positive"));
        }
        for (q, facts) in &self.queries {
            if !self.domain_multiplier.contains_key(&facts.domain) {
                return bad(format!("query {q:?} has unknown domain {:?}", facts.domain));
            }
        }
        Ok(())
    }

    /// `b(y)`.
    pub fn base_loss_of(&self, annotation: &str) -> f64 {
        match self.base_loss.get(annotation) {
            Some(&b) => b,
            None => {
                let h = xxh3_64_with_seed(annotation.as_bytes(), self.seed ^ 0xb45e_1055);
                0.5 + 1.5 * (h >> 11) as f64 / (1u64 << 53) as f64
            }
        }
    }

    /// `m(d(x))`.
    pub fn multiplier_of(&self, query: &str) -> f64 {
        self.queries
            .get(query)
            .and_then(|f| self.domain_multiplier.get(&f.domain))
            .copied()
            .unwrap_or(1.0)
    }

    pub fn is_match(&self, query: &str, annotation: &str) -> bool {
        self.queries.get(query).is_some_and(|f| f.answer == annotation)
    }

    /// Multiplicative log-normal noise for one conditional request.
    pub fn jitter(&self, prefix: &str, continuation: &str) -> f64 {
        if self.noise_sigma == 0.0 {
            return 1.0;
        }
        let mut key = Vec::with_capacity(prefix.len() + continuation.len() + 1);
        key.extend_from_slice(prefix.as_bytes());
        key.push(0);
        key.extend_from_slice(continuation.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(xxh3_64_with_seed(&key, self.seed));
        let z: f64 = StandardNormal.sample(&mut rng);
        (self.noise_sigma * z).exp()
    }

    /// Per-token loss the backend assigns to a request.
    pub fn loss(&self, prefix: &str, continuation: &str) -> f64 {
        let b = self.base_loss_of(continuation);
        if prefix.is_empty() {
            return b;
        }
        let mu = if self.is_match(prefix, continuation) { self.mu_clean } else { self.mu_noisy };
        b * self.multiplier_of(prefix) * mu * self.jitter(prefix, continuation)
    }
}

/// Whitespace tokenizer; token IDs are 32-bit hashes of the words.
pub(crate) fn whitespace_tokens(text: &str) -> Vec<u32> {
    text.split_whitespace().map(|w| xxh3_64(w.as_bytes()) as u32).collect()
}

/// Deterministic in-process backend realizing [`SyntheticScorerSpec`].
#[derive(Debug, Clone)]
pub struct SyntheticScorer {
    spec: SyntheticScorerSpec,
    id: String,
}

impl SyntheticScorer {
    pub fn new(spec: SyntheticScorerSpec) -> Result<Self, ScorerError> {
        spec.validate()?;
        let canonical = serde_json::to_vec(&spec).expect("spec serializes");
        let id = format!("synthetic:{:016x}", xxh3_64(&canonical));
        Ok(Self { spec, id })
    }

    pub fn spec(&self) -> &SyntheticScorerSpec {
        &self.spec
    }
}

impl Scorer for SyntheticScorer {
    fn backend_id(&self) -> String {
        self.id.clone()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>, ScorerError> {
        Ok(whitespace_tokens(text))
    }

    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let tokens = whitespace_tokens(request.continuation());
        if tokens.is_empty() {
            return Err(ScorerError::EmptyContinuation);
        }
        let loss = self.spec.loss(request.prefix(), request.continuation());
        let logprobs = vec![-loss; tokens.len()];
        ScoreResponse::from_parts(tokens, logprobs)
    }
}
