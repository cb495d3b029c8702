//! Score → detect → cleanse → retrieve-and-generate.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::config::{CleanseStrategy, CorpusKind, PipelineConfig};
use crate::dataset::Demonstration;
use crate::gmm::{apply_model, fit_gmm, partition, GmmError, GmmModel, Partition};
use crate::metrics::{
    build_neighbor_set, intrinsic_debias, per_token_nll, MetricsError, NeighborAnnotation, NeighborSet, ScoredSample,
    Verdict,
};
use crate::noise_lab::{exact_match, token_f1, NeighborSweepRow};
use crate::retrieval::{retrieve, Embedder, PromptTemplate, RetrievalError, RetrievalPool};
use crate::scorer::{Generator, ScoreRequest, Scorer, ScorerError};

pub const RUN_REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample {sample_id:?}: {source}")]
    Scorer { sample_id: String, source: ScorerError },
    #[error("sample {sample_id:?}: {source}")]
    Metrics { sample_id: String, source: MetricsError },
    #[error("neighbour set: {0}")]
    Neighbors(MetricsError),
    #[error("out-of-distribution corpus requested but no external annotations supplied")]
    MissingExternalCorpus,
    #[error("mixture fit: {0}")]
    Gmm(#[from] GmmError),
    #[error("{scored} scored samples for {dataset} demonstrations")]
    Misaligned { scored: usize, dataset: usize },
    #[error("every sample was flagged noisy; nothing to replace them with")]
    NoCleanSamples,
    #[error("retrieval pool is empty")]
    EmptyRetrievalPool,
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("generation for {query_id:?}: {source}")]
    Generation { query_id: String, source: ScorerError },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

fn thread_pool(config: &PipelineConfig) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))
}

fn check_ids(dataset: &[Demonstration]) -> Result<(), PipelineError> {
    let mut seen = HashSet::with_capacity(dataset.len());
    for d in dataset {
        if !seen.insert(d.sample_id.as_str()) {
            return Err(PipelineError::DuplicateId(d.sample_id.clone()));
        }
    }
    Ok(())
}

/// Scores plus the shared context they were computed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringRun {
    pub samples: Vec<ScoredSample>,
    pub t_max: usize,
    pub neighbors: NeighborSet,
    pub backend_id: String,
}

fn nll(scorer: &dyn Scorer, prefix: &str, continuation: &str) -> Result<f64, ScorerError> {
    let req = ScoreRequest::new(prefix, continuation)?;
    Ok(per_token_nll(&scorer.score(&req)?.scores))
}

/// Computes the cleanliness score of every demonstration, in input order.
///
/// The neighbour set is drawn once and shared by all samples; neighbour
/// unconditional losses are computed once. `external` supplies the
/// out-of-distribution annotation corpus.
pub fn score_corpus_detailed(
    dataset: &[Demonstration],
    config: &PipelineConfig,
    scorer: &dyn Scorer,
    external: Option<&[String]>,
) -> Result<ScoringRun, PipelineError> {
    if dataset.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    check_ids(dataset)?;
    let pool = thread_pool(config)?;

    pool.install(|| {
        let tokenized: Vec<NeighborAnnotation> = dataset
            .par_iter()
            .map(|d| {
                scorer
                    .tokenize(&d.annotation)
                    .map(|tokens| NeighborAnnotation { text: d.annotation.clone(), tokens })
                    .map_err(|source| PipelineError::Scorer { sample_id: d.sample_id.clone(), source })
            })
            .collect::<Result<_, _>>()?;
        let t_max = tokenized.iter().map(NeighborAnnotation::len).max().unwrap_or(0);

        let corpus: Vec<NeighborAnnotation> = match config.corpus_kind {
            CorpusKind::InDistribution => tokenized,
            CorpusKind::OutDistribution => external
                .ok_or(PipelineError::MissingExternalCorpus)?
                .par_iter()
                .map(|text| {
                    scorer
                        .tokenize(text)
                        .map(|tokens| NeighborAnnotation { text: text.clone(), tokens })
                        .map_err(|source| PipelineError::Scorer { sample_id: format!("external:{text}"), source })
                })
                .collect::<Result<_, _>>()?,
        };
        let neighbors = build_neighbor_set(&corpus, t_max, config.n_neighbor, config.seed, config.corpus_kind)
            .map_err(PipelineError::Neighbors)?;

        let neighbor_uncond: Vec<f64> = neighbors
            .annotations
            .par_iter()
            .map(|a| {
                nll(scorer, "", &a.text)
                    .map_err(|source| PipelineError::Scorer { sample_id: format!("neighbor:{}", a.text), source })
            })
            .collect::<Result<_, _>>()?;

        let samples: Vec<ScoredSample> = dataset
            .par_iter()
            .map(|d| {
                let scorer_err = |source| PipelineError::Scorer { sample_id: d.sample_id.clone(), source };
                let metrics_err = |source| PipelineError::Metrics { sample_id: d.sample_id.clone(), source };
                let cond = nll(scorer, &d.query, &d.annotation).map_err(scorer_err)?;
                let uncond = nll(scorer, "", &d.annotation).map_err(scorer_err)?;
                let mut neighbor_de_int = Vec::with_capacity(neighbors.count());
                for (a, &u) in neighbors.annotations.iter().zip(&neighbor_uncond) {
                    let c = nll(scorer, &d.query, &a.text).map_err(scorer_err)?;
                    neighbor_de_int.push(intrinsic_debias(c, u).map_err(metrics_err)?);
                }
                ScoredSample::compute(d.sample_id.clone(), cond, uncond, &neighbor_de_int).map_err(metrics_err)
            })
            .collect::<Result<_, _>>()?;

        Ok(ScoringRun { samples, t_max, neighbors, backend_id: scorer.backend_id() })
    })
}

pub fn score_corpus(
    dataset: &[Demonstration],
    config: &PipelineConfig,
    scorer: &dyn Scorer,
    external: Option<&[String]>,
) -> Result<Vec<ScoredSample>, PipelineError> {
    score_corpus_detailed(dataset, config, scorer, external).map(|r| r.samples)
}

/// Fits the mixture on the cleanliness scores, attaches posteriors and
/// verdicts at `config.gamma`, and returns the partition.
pub fn detect(scored: &mut [ScoredSample], config: &PipelineConfig) -> Result<(GmmModel, Partition), PipelineError> {
    let scores: Vec<f64> = scored.iter().map(|s| s.cleanliness).collect();
    let model = fit_gmm(&scores, config.max_iter, config.tol, config.seed)?;
    apply_model(&model, scored, config.gamma);
    let part = partition(scored, config.gamma);
    Ok((model, part))
}

/// Applies the configured cleansing strategy using the verdicts on `scored`.
///
/// `ReplaceNearestClean` keeps every slot: a noisy demonstration takes the
/// query, annotation and fields of the clean demonstration whose query
/// embedding is most similar (ties by smallest sample id) but keeps its own
/// sample id, so ids stay unique.
pub fn cleanse(
    dataset: &[Demonstration],
    scored: &[ScoredSample],
    config: &PipelineConfig,
    embedder: &dyn Embedder,
) -> Result<Vec<Demonstration>, PipelineError> {
    if dataset.len() != scored.len() {
        return Err(PipelineError::Misaligned { scored: scored.len(), dataset: dataset.len() });
    }
    let noisy = |i: usize| scored[i].verdict == Verdict::Noisy;
    match config.cleanse_strategy {
        CleanseStrategy::RemoveAll => {
            Ok(dataset.iter().enumerate().filter(|(i, _)| !noisy(*i)).map(|(_, d)| d.clone()).collect())
        }
        CleanseStrategy::ReplaceNearestClean => {
            if !(0..dataset.len()).any(noisy) {
                return Ok(dataset.to_vec());
            }
            let mut clean: Vec<usize> = (0..dataset.len()).filter(|&i| !noisy(i)).collect();
            if clean.is_empty() {
                return Err(PipelineError::NoCleanSamples);
            }
            clean.sort_by(|&a, &b| dataset[a].sample_id.cmp(&dataset[b].sample_id));
            let clean_emb = clean
                .iter()
                .map(|&i| embedder.embed(&dataset[i].query))
                .collect::<Result<Vec<_>, _>>()?;
            let mut out = Vec::with_capacity(dataset.len());
            for (i, d) in dataset.iter().enumerate() {
                if !noisy(i) {
                    out.push(d.clone());
                    continue;
                }
                let e = embedder.embed(&d.query)?;
                let mut best = 0;
                let mut best_sim = f64::NEG_INFINITY;
                // clean is in id order, so strict > keeps the smallest id on ties
                for (j, ce) in clean_emb.iter().enumerate() {
                    let sim = ce.dot(&e);
                    if sim > best_sim {
                        best_sim = sim;
                        best = j;
                    }
                }
                let mut replacement = dataset[clean[best]].clone();
                replacement.sample_id = d.sample_id.clone();
                out.push(replacement);
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclRecord {
    pub query_id: String,
    pub demo_ids: Vec<String>,
    pub generation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclSummary {
    pub n_queries: usize,
    pub n_scored: usize,
    pub exact_match: f64,
    pub token_f1: f64,
}

impl IclSummary {
    pub fn of(records: &[IclRecord]) -> Self {
        let scored: Vec<&IclRecord> = records.iter().filter(|r| r.exact_match.is_some()).collect();
        let n = scored.len();
        let mean = |f: &dyn Fn(&IclRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                scored.iter().map(|r| f(r)).sum::<f64>() / n as f64
            }
        };
        Self {
            n_queries: records.len(),
            n_scored: n,
            exact_match: mean(&|r| if r.exact_match == Some(true) { 1.0 } else { 0.0 }),
            token_f1: mean(&|r| r.token_f1.unwrap_or(0.0)),
        }
    }
}

/// Everything `run_icl` needs besides the queries.
pub struct IclContext<'a> {
    pub pool: &'a RetrievalPool,
    pub embedder: &'a dyn Embedder,
    pub generator: &'a dyn Generator,
    pub template: &'a PromptTemplate,
}

/// Retrieves `shots_k` demonstrations per test query (most relevant first),
/// renders the prompt and generates an answer. A test query's `annotation`,
/// when non-empty, is the reference answer for exact-match and token-F1.
///
/// Random retrieval draws with a per-query seed derived from the run seed and
/// the query id, so results do not depend on scheduling.
pub fn run_icl(
    test: &[Demonstration],
    ctx: &IclContext<'_>,
    config: &PipelineConfig,
) -> Result<Vec<IclRecord>, PipelineError> {
    if ctx.pool.is_empty() {
        return Err(PipelineError::EmptyRetrievalPool);
    }
    let pool = thread_pool(config)?;
    pool.install(|| {
        test.par_iter()
            .map(|q| {
                let picks = if config.shots_k == 0 {
                    Vec::new()
                } else {
                    let emb = ctx.embedder.embed(&q.query)?;
                    let seed = xxh3_64_with_seed(q.sample_id.as_bytes(), config.seed);
                    retrieve(config.retriever, &emb, ctx.pool, config.shots_k, seed)?
                };
                let demos: Vec<&Demonstration> = picks.iter().map(|&i| ctx.pool.get(i)).collect();
                let prompt = ctx.template.render(&demos, q)?;
                let generation = ctx
                    .generator
                    .generate(&prompt, config.max_new_tokens)
                    .map_err(|source| PipelineError::Generation { query_id: q.sample_id.clone(), source })?;
                let reference = (!q.annotation.is_empty()).then(|| q.annotation.clone());
                Ok(IclRecord {
                    query_id: q.sample_id.clone(),
                    demo_ids: demos.iter().map(|d| d.sample_id.clone()).collect(),
                    exact_match: reference.as_deref().map(|r| exact_match(&generation, r)),
                    token_f1: reference.as_deref().map(|r| token_f1(&generation, r)),
                    reference,
                    generation,
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub clean: usize,
    pub noisy: usize,
}

/// Machine-readable record of a detection run. Wall-clock timing lives in
/// the run manifest so that reports are byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub backend_id: String,
    pub t_max: usize,
    pub neighbor_count: usize,
    pub gmm: GmmModel,
    pub partition: PartitionSizes,
    pub samples: Vec<ScoredSample>,
}

/// Result of scoring and detecting over one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRun {
    pub scoring: ScoringRun,
    pub model: GmmModel,
    pub partition: Partition,
}

impl DetectionRun {
    pub fn report(&self, config: &PipelineConfig) -> RunReport {
        RunReport {
            schema_version: RUN_REPORT_SCHEMA_VERSION,
            config: config.clone(),
            backend_id: self.scoring.backend_id.clone(),
            t_max: self.scoring.t_max,
            neighbor_count: self.scoring.neighbors.count(),
            gmm: self.model.clone(),
            partition: PartitionSizes { clean: self.partition.clean.len(), noisy: self.partition.noisy.len() },
            samples: self.scoring.samples.clone(),
        }
    }
}

/// `score_corpus_detailed` followed by `detect`.
pub fn run_detection(
    dataset: &[Demonstration],
    config: &PipelineConfig,
    scorer: &dyn Scorer,
    external: Option<&[String]>,
) -> Result<DetectionRun, PipelineError> {
    let mut scoring = score_corpus_detailed(dataset, config, scorer, external)?;
    let (model, partition) = detect(&mut scoring.samples, config)?;
    Ok(DetectionRun { scoring, model, partition })
}

/// Re-runs detection at each neighbour count and reports ranking quality.
pub fn neighbor_sweep(
    dataset: &[Demonstration],
    gold: &[bool],
    config: &PipelineConfig,
    scorer: &dyn Scorer,
    external: Option<&[String]>,
    counts: &[usize],
) -> Result<Vec<NeighborSweepRow>, PipelineError> {
    counts
        .iter()
        .map(|&n| {
            let cfg = PipelineConfig { n_neighbor: n, ..config.clone() };
            let run = run_detection(dataset, &cfg, scorer, external)?;
            let r = crate::noise_lab::detection_metrics(&run.scoring.samples, gold, cfg.gamma, Some(&run.model))
                .expect("gold aligned by caller");
            Ok(NeighborSweepRow {
                n_neighbor: n,
                auc_cleanliness: r.auc_cleanliness,
                auc_naive_nll: r.auc_naive_nll,
                f1: r.f1,
            })
        })
        .collect()
}
