//! Noisy-demonstration detection and cleansing for in-context learning.
//!
//! Each demonstration `(x, y)` gets a cleanliness score
//! `I = Φ / L_de-int(y|x)`, where `L_de-int = L(y|x) / L(y)` removes the
//! annotation's own difficulty and `Φ`, the mean `L_de-int` of unrelated
//! neighbour annotations under the same query, removes the query's. A
//! two-component Gaussian mixture over `I` flags the low-scoring component
//! as noisy.

pub mod config;
pub mod dataset;
pub mod gmm;
pub mod metrics;
pub mod noise_lab;
pub mod pipeline;
pub mod retrieval;
pub mod scorer;

pub use config::{Backend, CleanseStrategy, PipelineConfig, RetrieverKind};
pub use dataset::Demonstration;
pub use gmm::{fit_gmm, GmmModel, Partition};
pub use metrics::{CorpusKind, ScoredSample, TokenScoreVector, Verdict};
pub use noise_lab::{DetectionReport, NoiseKind, NoiseSpec};
pub use pipeline::{cleanse, detect, run_detection, run_icl, score_corpus, PipelineError, RunReport};
pub use retrieval::{PromptTemplate, RetrievalPool};
pub use scorer::{Generator, ScoreRequest, ScoreResponse, Scorer, ScorerError};
