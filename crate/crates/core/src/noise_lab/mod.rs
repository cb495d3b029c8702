//! Controlled noise injection and detection-quality evaluation.

mod auc;
mod inject;
mod report;
mod synth;
mod text;

pub use auc::{auc, auc_pairwise};
pub use inject::{baseline_random_delete, inject_noise, noise_count, NoiseKind, NoiseSpec};
pub use report::{
    detection_metrics, emit_gamma_sweep, emit_neighbor_sweep, emit_report, gamma_sweep, Histogram, DetectionReport,
    GammaSweepRow, NeighborSweepRow, PartitionCounts, HISTOGRAM_BINS, REPORT_SCHEMA_VERSION,
};
pub use synth::{synthetic_corpus, SynthCorpus, SynthCorpusConfig};
pub use text::{exact_match, normalize_answer, token_f1};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseLabError {
    #[error("noise ratio must lie in [0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("could not draw a replacement different from the original annotation of {0:?}")]
    CannotAvoidIdentity(String),
    #[error("gold labels missing for sample {0:?}")]
    MissingGold(String),
    #[error("{scored} scored samples but {gold} gold labels")]
    Misaligned { scored: usize, gold: usize },
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}
