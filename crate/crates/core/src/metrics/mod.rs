//! Per-sample loss metrics and the sample cleanliness score.
//!
//! Every function here is pure. The pipeline feeds them with per-token
//! log-probabilities obtained from a [`crate::scorer::Scorer`]:
//!
//! * `L(y|x)`: mean negative log-probability of the annotation given the query.
//! * `L(y)`: the same quantity with an empty prefix.
//! * `L_de-int = L(y|x) / L(y)` removes the model's familiarity with the
//!   annotation text itself.
//! * `Φ(x)` is the mean `L_de-int` over a fixed set of neighbour annotations
//!   paired with the same query; it absorbs the domain-level offset.
//! * `I = Φ / L_de-int` is the cleanliness score; larger means cleaner.

mod edit;
mod neighbors;

pub use edit::edit_distance;
pub use neighbors::{build_neighbor_set, neighbor_radius, CorpusKind, NeighborAnnotation, NeighborSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Division guard for the two ratio steps, in nats/token.
pub const EPS_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("token score vector is empty")]
    EmptySequence,
    #[error("log-probability at position {index} is invalid: {value}")]
    InvalidLogprob { index: usize, value: f64 },
    #[error("unconditional loss {0} is at or below the floor; the backend scores this annotation as near-certain")]
    DegenerateUnconditional(f64),
    #[error("intrinsic-debiased loss {0} is at or below the floor")]
    DegenerateDeInt(f64),
    #[error("neighbor set is empty")]
    EmptyNeighborSet,
    #[error("corpus has {available} sequences within t_max={t_max}, need {needed}")]
    InsufficientCorpus { available: usize, needed: usize, t_max: usize },
}

/// Natural-log probabilities of each continuation token, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScoreVector {
    logprobs: Vec<f64>,
}

impl TokenScoreVector {
    /// Validates that every entry is finite and `<= 0`.
    pub fn new(logprobs: Vec<f64>) -> Result<Self, MetricsError> {
        if logprobs.is_empty() {
            return Err(MetricsError::EmptySequence);
        }
        if let Some((index, &value)) = logprobs
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v > 0.0)
        {
            return Err(MetricsError::InvalidLogprob { index, value });
        }
        Ok(Self { logprobs })
    }

    pub fn token_count(&self) -> usize {
        self.logprobs.len()
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }
}

/// Mean negative log-likelihood per token.
pub fn per_token_nll(scores: &TokenScoreVector) -> f64 {
    let total: f64 = scores.logprobs.iter().sum();
    let nll = -total / scores.logprobs.len() as f64;
    // -0.0 for an all-zero vector
    nll.max(0.0)
}

/// Same as [`per_token_nll`] for raw slices, rejecting the empty case.
pub fn per_token_nll_of(logprobs: &[f64]) -> Result<f64, MetricsError> {
    TokenScoreVector::new(logprobs.to_vec()).map(|v| per_token_nll(&v))
}

/// `L(y|x) / L(y)`.
pub fn intrinsic_debias(cond_nll: f64, uncond_nll: f64) -> Result<f64, MetricsError> {
    if uncond_nll.is_nan() || uncond_nll <= EPS_FLOOR {
        return Err(MetricsError::DegenerateUnconditional(uncond_nll));
    }
    Ok(cond_nll / uncond_nll)
}

/// Discrete extrinsic-bias estimate: the mean debiased loss over the neighbour
/// annotations paired with this sample's query.
pub fn estimate_extrinsic_bias(de_int_of_neighbors: &[f64]) -> Result<f64, MetricsError> {
    if de_int_of_neighbors.is_empty() {
        return Err(MetricsError::EmptyNeighborSet);
    }
    let sum: f64 = de_int_of_neighbors.iter().sum();
    Ok(sum / de_int_of_neighbors.len() as f64)
}

/// `Φ / L_de-int`.
pub fn cleanliness_score(phi: f64, de_int: f64) -> Result<f64, MetricsError> {
    if de_int.is_nan() || de_int <= EPS_FLOOR {
        return Err(MetricsError::DegenerateDeInt(de_int));
    }
    Ok(phi / de_int)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Clean,
    Noisy,
    Undecided,
}

/// All per-sample quantities produced by the scoring pass and the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub cond_nll: f64,
    pub uncond_nll: f64,
    pub de_int: f64,
    pub phi: f64,
    pub cleanliness: f64,
    /// Responsibility of the noisy GMM component; `0.0` until a model is applied.
    pub posterior_noisy: f64,
    pub verdict: Verdict,
}

impl ScoredSample {
    /// Runs the full metric chain for one sample. `neighbor_de_int` holds
    /// `L_de-int(y'|x)` for every neighbour paired with this sample's query.
    pub fn compute(
        sample_id: impl Into<String>,
        cond_nll: f64,
        uncond_nll: f64,
        neighbor_de_int: &[f64],
    ) -> Result<Self, MetricsError> {
        let de_int = intrinsic_debias(cond_nll, uncond_nll)?;
        let phi = estimate_extrinsic_bias(neighbor_de_int)?;
        let cleanliness = cleanliness_score(phi, de_int)?;
        Ok(Self {
            sample_id: sample_id.into(),
            cond_nll,
            uncond_nll,
            de_int,
            phi,
            cleanliness,
            posterior_noisy: 0.0,
            verdict: Verdict::Undecided,
        })
    }
}
