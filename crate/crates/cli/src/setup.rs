//! Turning flags and config files into a validated config and live backends.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use cleanscore_core::config::{Backend, CleanseStrategy, CorpusKind, PipelineConfig, RetrieverKind};
use cleanscore_core::dataset::{parse_jsonl, read_annotation_corpus, Demonstration};
use cleanscore_core::retrieval::PromptTemplate;
use cleanscore_core::scorer::{
    CachedScorer, Generator, RemoteScorer, Scorer, SyntheticGenerator, SyntheticScorer, SyntheticScorerSpec,
};

use crate::manifest::Recorder;
use crate::{Classify, CmdResult, PipelineFlags, RetrieverFlag, StrategyFlag};

pub const CACHE_ENV: &str = "CLEANSCORE_CACHE_DIR";
const DEFAULT_CACHE_DIR: &str = ".cleanscore_cache";

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads the config file (paths inside it are relative to the file), applies
/// flag overrides and validates the result.
pub fn load_config(flags: &PipelineFlags, rec: &mut Recorder) -> CmdResult<PipelineConfig> {
    let mut config = match &flags.config {
        Some(path) => {
            let text = rec.read_string(path).usage()?;
            let mut c: PipelineConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display())).usage()?;
            let base = path.parent().unwrap_or(Path::new("."));
            c.synthetic_spec_path = c.synthetic_spec_path.map(|p| resolve(base, &p));
            c.external_corpus_path = c.external_corpus_path.map(|p| resolve(base, &p));
            if PromptTemplate::builtin(&c.template).is_none() {
                c.template = resolve(base, Path::new(&c.template)).display().to_string();
            }
            c
        }
        None => PipelineConfig::default(),
    };

    if let Some(b) = &flags.backend {
        config.metric_backend = b.parse().usage()?;
    }
    if let Some(b) = &flags.inference_backend {
        config.inference_backend = b.parse().usage()?;
    }
    if let Some(g) = flags.gamma {
        config.gamma = g;
    }
    if let Some(n) = flags.n_neighbor {
        config.n_neighbor = n;
    }
    if let Some(corpus) = &flags.corpus {
        match corpus.as_str() {
            "in" => config.corpus_kind = CorpusKind::InDistribution,
            other => match other.strip_prefix("out:") {
                Some(path) if !path.is_empty() => {
                    config.corpus_kind = CorpusKind::OutDistribution;
                    config.external_corpus_path = Some(PathBuf::from(path));
                }
                _ => return Err(anyhow!("--corpus expects `in` or `out:PATH`, got {other:?}")).usage(),
            },
        }
    }
    if let Some(s) = flags.strategy {
        config.cleanse_strategy = match s {
            StrategyFlag::Remove => CleanseStrategy::RemoveAll,
            StrategyFlag::Replace => CleanseStrategy::ReplaceNearestClean,
        };
    }
    if let Some(r) = flags.retriever {
        config.retriever = match r {
            RetrieverFlag::Random => RetrieverKind::Random,
            RetrieverFlag::Topk => RetrieverKind::TopK,
            RetrieverFlag::Dpp => RetrieverKind::Dpp,
        };
    }
    if let Some(k) = flags.k {
        config.shots_k = k;
    }
    if let Some(s) = flags.seed {
        config.seed = s;
    }
    if let Some(t) = &flags.template {
        config.template = t.clone();
    }
    config.validate().usage()?;
    rec.set_config(&config);
    Ok(config)
}

pub fn read_dataset(path: &Path, rec: &mut Recorder) -> CmdResult<Vec<Demonstration>> {
    let text = rec.read_string(path).usage()?;
    parse_jsonl(&text, &path.display().to_string()).usage()
}

pub fn read_corpus(path: &Path, rec: &mut Recorder) -> CmdResult<Vec<String>> {
    rec.read(path).usage()?;
    read_annotation_corpus(path).usage()
}

/// The external corpus when the config asks for one.
pub fn external_corpus(config: &PipelineConfig, rec: &mut Recorder) -> CmdResult<Option<Vec<String>>> {
    match (&config.corpus_kind, &config.external_corpus_path) {
        (CorpusKind::OutDistribution, Some(p)) => read_corpus(p, rec).map(Some),
        _ => Ok(None),
    }
}

pub fn template(config: &PipelineConfig, rec: &mut Recorder) -> CmdResult<PromptTemplate> {
    if let Some(t) = PromptTemplate::builtin(&config.template) {
        return Ok(t);
    }
    let text = rec.read_string(Path::new(&config.template)).usage()?;
    PromptTemplate::from_json(&text).usage()
}

fn synthetic_spec(config: &PipelineConfig, rec: &mut Recorder) -> CmdResult<SyntheticScorerSpec> {
    let Some(path) = &config.synthetic_spec_path else {
        return Err(anyhow!("the synthetic backend needs `synthetic_spec_path` in the config")).usage();
    };
    let text = rec.read_string(path).usage()?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing synthetic spec {}", path.display()))
        .usage()
}

pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
}

pub fn metric_scorer(config: &PipelineConfig, rec: &mut Recorder) -> CmdResult<Box<dyn Scorer>> {
    let scorer: Box<dyn Scorer> = match &config.metric_backend {
        Backend::Synthetic => Box::new(SyntheticScorer::new(synthetic_spec(config, rec)?).usage()?),
        Backend::Url(url) => {
            let remote = RemoteScorer::connect(url).with_context(|| format!("connecting to {url}")).runtime()?;
            Box::new(CachedScorer::new(remote, cache_dir()).runtime()?)
        }
    };
    rec.set_backend(scorer.backend_id());
    Ok(scorer)
}

pub fn generator(config: &PipelineConfig) -> CmdResult<Box<dyn Generator>> {
    Ok(match &config.inference_backend {
        Backend::Synthetic => Box::new(SyntheticGenerator),
        Backend::Url(url) => {
            Box::new(RemoteScorer::connect(url).with_context(|| format!("connecting to {url}")).runtime()?)
        }
    })
}

pub fn gold_flags(data: &[Demonstration]) -> CmdResult<Vec<bool>> {
    data.iter()
        .map(|d| d.gold_is_noisy.ok_or_else(|| anyhow!("sample {:?} has no gold_is_noisy flag", d.sample_id)))
        .collect::<anyhow::Result<_>>()
        .usage()
}

pub fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> CmdResult<Vec<T>> {
    let items: Result<Vec<T>, _> = text.split(',').map(|s| s.trim().parse()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(anyhow!("{flag} expects a comma-separated list, got {text:?}")).usage(),
    }
}

pub fn ensure_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).runtime()
}
