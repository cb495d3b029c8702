use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::metrics::CorpusKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("n_neighbor must be positive")]
    NeighborCount,
    #[error("corpus_kind OutDistribution requires external_corpus_path")]
    MissingExternalCorpus,
    #[error("parallelism must be positive")]
    Parallelism,
    #[error("invalid backend {0:?}: expected \"synthetic\" or an http(s) URL")]
    Backend(String),
}

/// A scoring or inference endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum Backend {
    #[default]
    Synthetic,
    Url(String),
}

impl TryFrom<String> for Backend {
    type Error = ConfigError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl std::str::FromStr for Backend {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "synthetic" {
            Ok(Backend::Synthetic)
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(Backend::Url(s.to_string()))
        } else {
            Err(ConfigError::Backend(s.to_string()))
        }
    }
}

impl From<Backend> for String {
    fn from(b: Backend) -> Self {
        b.to_string()
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Synthetic => f.write_str("synthetic"),
            Backend::Url(u) => f.write_str(u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CleanseStrategy {
    #[default]
    RemoveAll,
    ReplaceNearestClean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RetrieverKind {
    Random,
    #[default]
    TopK,
    #[serde(rename = "DPP")]
    Dpp,
}

impl fmt::Display for RetrieverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RetrieverKind::Random => "random",
            RetrieverKind::TopK => "topk",
            RetrieverKind::Dpp => "dpp",
        })
    }
}

fn default_gamma() -> f64 {
    0.5
}
fn default_n_neighbor() -> usize {
    50
}
fn default_shots() -> usize {
    4
}
fn default_parallelism() -> usize {
    8
}
fn default_max_iter() -> usize {
    crate::gmm::DEFAULT_MAX_ITER
}
fn default_tol() -> f64 {
    crate::gmm::DEFAULT_TOL
}
fn default_template() -> String {
    "nq".into()
}
fn default_max_new_tokens() -> usize {
    32
}

/// Run configuration. The JSON config file uses these field names verbatim;
/// every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_n_neighbor")]
    pub n_neighbor: usize,
    #[serde(default)]
    pub corpus_kind: CorpusKind,
    #[serde(default)]
    pub external_corpus_path: Option<PathBuf>,
    #[serde(default)]
    pub cleanse_strategy: CleanseStrategy,
    #[serde(default)]
    pub retriever: RetrieverKind,
    #[serde(default = "default_shots")]
    pub shots_k: usize,
    #[serde(default)]
    pub metric_backend: Backend,
    #[serde(default)]
    pub inference_backend: Backend,
    #[serde(default)]
    pub seed: u64,
    /// Carried through to reports untouched; it has no effect on detection.
    #[serde(default)]
    pub gmm_part_thres: Option<f64>,
    /// Spec file for the synthetic metric backend.
    #[serde(default)]
    pub synthetic_spec_path: Option<PathBuf>,
    /// Built-in template name (`nq`, `webq`, `sciq`, `squad`) or a JSON path.
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ConfigError::Gamma(self.gamma));
        }
        if self.n_neighbor == 0 {
            return Err(ConfigError::NeighborCount);
        }
        if self.corpus_kind == CorpusKind::OutDistribution && self.external_corpus_path.is_none() {
            return Err(ConfigError::MissingExternalCorpus);
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Parallelism);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.n_neighbor, 50);
        assert_eq!(c.corpus_kind, CorpusKind::InDistribution);
        assert_eq!(c.parallelism, 8);
        c.validate().unwrap();
    }

    #[test]
    fn field_names_round_trip() {
        let json = r#"{"gamma":0.7,"n_neighbor":10,"corpus_kind":"OutDistribution",
            "external_corpus_path":"ext.txt","cleanse_strategy":"ReplaceNearestClean",
            "retriever":"DPP","shots_k":3,"metric_backend":"http://localhost:8080",
            "inference_backend":"synthetic","seed":7,"gmm_part_thres":5.0}"#;
        let c: PipelineConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.retriever, RetrieverKind::Dpp);
        assert_eq!(c.metric_backend, Backend::Url("http://localhost:8080".into()));
        assert_eq!(c.gmm_part_thres, Some(5.0));
        c.validate().unwrap();
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn validation_errors() {
        let mut c = PipelineConfig { gamma: 1.5, ..Default::default() };
        assert_eq!(c.validate(), Err(ConfigError::Gamma(1.5)));
        c.gamma = 0.5;
        c.corpus_kind = CorpusKind::OutDistribution;
        assert_eq!(c.validate(), Err(ConfigError::MissingExternalCorpus));
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"metric_backend":"ftp://x"}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"gama":0.5}"#).is_err());
    }
}
