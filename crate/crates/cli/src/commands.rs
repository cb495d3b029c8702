use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use cleanscore_core::config::{Backend, PipelineConfig};
use cleanscore_core::dataset::{to_jsonl, Demonstration};
use cleanscore_core::gmm::GmmModel;
use cleanscore_core::metrics::ScoredSample;
use cleanscore_core::noise_lab::{
    baseline_random_delete, detection_metrics, emit_gamma_sweep, emit_neighbor_sweep, emit_report, gamma_sweep,
    inject_noise, synthetic_corpus, NoiseKind, NoiseLabError, NoiseSpec, SynthCorpusConfig,
};
use cleanscore_core::pipeline::{self, neighbor_sweep, run_detection, run_icl, IclContext, IclSummary, PipelineError};
use cleanscore_core::retrieval::{HashedTfIdf, RetrievalPool, DEFAULT_DIM};

use crate::manifest::Recorder;
use crate::setup::{
    ensure_dir, external_corpus, generator, gold_flags, load_config, metric_scorer, parse_list, read_corpus,
    read_dataset, template,
};
use crate::{Classify, CmdResult, Failure, PipelineFlags};

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

fn jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("row serializes");
        out.push(b'\n');
    }
    out
}

fn sidecar(path: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", path.display()))
}

/// Setup problems exit 2, everything else exits 1.
fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::EmptyDataset
        | PipelineError::DuplicateId(_)
        | PipelineError::MissingExternalCorpus
        | PipelineError::Neighbors(_)
        | PipelineError::EmptyRetrievalPool => Failure::Usage(e.into()),
        other => Failure::Runtime(other.into()),
    }
}

fn noise_failure(e: NoiseLabError) -> Failure {
    match e {
        NoiseLabError::Io { .. } | NoiseLabError::CannotAvoidIdentity(_) => Failure::Runtime(e.into()),
        other => Failure::Usage(other.into()),
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindFlag {
    Irrelevant,
    Relevant,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    kind: KindFlag,
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    seed: u64,
    /// Annotation corpus for irrelevant noise (text: one per line, or JSONL).
    #[arg(long)]
    external: Option<PathBuf>,
}

pub fn inject(a: InjectArgs) -> CmdResult {
    let mut rec = Recorder::new("inject");
    let data = read_dataset(&a.input, &mut rec)?;
    let external = a.external.as_deref().map(|p| read_corpus(p, &mut rec)).transpose()?;
    let kind = match a.kind {
        KindFlag::Irrelevant => NoiseKind::Irrelevant,
        KindFlag::Relevant => NoiseKind::Relevant,
    };
    let spec = NoiseSpec { kind, ratio: a.ratio, external_corpus_path: a.external.clone(), seed: a.seed };
    let noised = inject_noise(&data, &spec, external.as_deref()).map_err(noise_failure)?;
    rec.write(&a.out, to_jsonl(&noised).as_bytes()).runtime()?;
    let flagged = noised.iter().filter(|d| d.gold_is_noisy == Some(true)).count();
    eprintln!("corrupted {flagged} of {} samples -> {}", noised.len(), a.out.display());
    rec.finish(&sidecar(&a.out)).runtime()?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Serialize)]
struct PartitionIds<'a> {
    clean: Vec<&'a str>,
    noisy: Vec<&'a str>,
}

pub fn detect(a: DetectArgs) -> CmdResult {
    let mut rec = Recorder::new("detect");
    let config = load_config(&a.pipeline, &mut rec)?;
    let data = read_dataset(&a.data, &mut rec)?;
    let external = external_corpus(&config, &mut rec)?;
    let scorer = metric_scorer(&config, &mut rec)?;
    let run = run_detection(&data, &config, scorer.as_ref(), external.as_deref()).map_err(pipeline_failure)?;

    ensure_dir(&a.out)?;
    let samples = &run.scoring.samples;
    rec.write(&a.out.join("scored.jsonl"), &jsonl(samples)).runtime()?;
    rec.write(&a.out.join("gmm.json"), &json(&run.model)).runtime()?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| samples[i].sample_id.as_str()).collect();
    let part = PartitionIds { clean: ids(&run.partition.clean), noisy: ids(&run.partition.noisy) };
    rec.write(&a.out.join("partition.json"), &json(&part)).runtime()?;
    rec.write(&a.out.join("report.json"), &json(&run.report(&config))).runtime()?;

    if data.iter().all(|d| d.gold_is_noisy.is_some()) {
        let gold = gold_flags(&data)?;
        let report = detection_metrics(samples, &gold, config.gamma, Some(&run.model)).map_err(noise_failure)?;
        emit_report(&report, &a.out).map_err(noise_failure)?;
        rec.record_output(&a.out.join("detection.json")).runtime()?;
        rec.record_output(&a.out.join("histogram.csv")).runtime()?;
        if let Some(auc) = report.auc_cleanliness {
            eprintln!("AUC(I) {auc:.4}  precision {:.4}  recall {:.4}", report.precision, report.recall);
        }
    }
    eprintln!(
        "{} samples: {} clean, {} noisy (gamma {})",
        samples.len(),
        run.partition.clean.len(),
        run.partition.noisy.len(),
        config.gamma
    );
    rec.finish(&a.out.join("manifest.json")).runtime()?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineFlag {
    /// Drop round(ratio · N) samples uniformly at random.
    RandomDelete,
}

#[derive(Debug, Args)]
pub struct CleanseArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output JSONL.
    #[arg(long)]
    out: PathBuf,
    /// `scored.jsonl` from a previous detect run; detection reruns when absent.
    #[arg(long)]
    scored: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<BaselineFlag>,
    /// Removal ratio for the random-delete baseline.
    #[arg(long)]
    ratio: Option<f64>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

fn read_scored(path: &Path, data: &[Demonstration], rec: &mut Recorder) -> CmdResult<Vec<ScoredSample>> {
    let text = rec.read_string(path).usage()?;
    let mut by_id: HashMap<String, ScoredSample> = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let s: ScoredSample = serde_json::from_str(line)
            .with_context(|| format!("{}: line {}", path.display(), i + 1))
            .usage()?;
        by_id.insert(s.sample_id.clone(), s);
    }
    data.iter()
        .map(|d| {
            by_id
                .remove(&d.sample_id)
                .ok_or_else(|| anyhow!("{} has no score for sample {:?}", path.display(), d.sample_id))
        })
        .collect::<anyhow::Result<_>>()
        .usage()
}

pub fn cleanse(a: CleanseArgs) -> CmdResult {
    let mut rec = Recorder::new("cleanse");
    let config = load_config(&a.pipeline, &mut rec)?;
    let data = read_dataset(&a.data, &mut rec)?;

    let cleansed = match a.baseline {
        Some(BaselineFlag::RandomDelete) => {
            let ratio = a.ratio.ok_or_else(|| anyhow!("--baseline random-delete needs --ratio")).usage()?;
            baseline_random_delete(&data, ratio, config.seed).map_err(noise_failure)?
        }
        None => {
            let scored = match &a.scored {
                Some(p) => read_scored(p, &data, &mut rec)?,
                None => {
                    let external = external_corpus(&config, &mut rec)?;
                    let scorer = metric_scorer(&config, &mut rec)?;
                    run_detection(&data, &config, scorer.as_ref(), external.as_deref())
                        .map_err(pipeline_failure)?
                        .scoring
                        .samples
                }
            };
            let embedder = HashedTfIdf::fit(DEFAULT_DIM, data.iter().map(|d| d.query.as_str()));
            pipeline::cleanse(&data, &scored, &config, &embedder).map_err(pipeline_failure)?
        }
    };
    rec.write(&a.out, to_jsonl(&cleansed).as_bytes()).runtime()?;
    eprintln!("kept {} of {} samples -> {}", cleansed.len(), data.len(), a.out.display());
    rec.finish(&sidecar(&a.out)).runtime()?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct IclArgs {
    /// Retrieval pool, usually a cleansed dataset.
    #[arg(long)]
    data: PathBuf,
    /// Test queries; a non-empty `annotation` is the reference answer.
    #[arg(long)]
    test: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

pub fn icl(a: IclArgs) -> CmdResult {
    let mut rec = Recorder::new("icl");
    let config = load_config(&a.pipeline, &mut rec)?;
    let pool_demos = read_dataset(&a.data, &mut rec)?;
    let test = read_dataset(&a.test, &mut rec)?;
    let template = template(&config, &mut rec)?;
    let gen = generator(&config)?;
    if let Backend::Url(u) = &config.inference_backend {
        rec.set_backend(format!("generate:{u}"));
    }

    let embedder = HashedTfIdf::fit(DEFAULT_DIM, pool_demos.iter().map(|d| d.query.as_str()));
    let pool = RetrievalPool::build(pool_demos, &embedder).runtime()?;
    let ctx = IclContext { pool: &pool, embedder: &embedder, generator: gen.as_ref(), template: &template };
    let records = run_icl(&test, &ctx, &config).map_err(pipeline_failure)?;
    let summary = IclSummary::of(&records);

    ensure_dir(&a.out)?;
    rec.write(&a.out.join("generations.jsonl"), &jsonl(&records)).runtime()?;
    rec.write(&a.out.join("summary.json"), &json(&summary)).runtime()?;
    eprintln!(
        "{} queries, exact match {:.4}, token F1 {:.4}",
        summary.n_queries, summary.exact_match, summary.token_f1
    );
    rec.finish(&a.out.join("manifest.json")).runtime()?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Dataset carrying gold_is_noisy flags.
    #[arg(long)]
    data: PathBuf,
    /// `scored.jsonl` from detect.
    #[arg(long)]
    scored: PathBuf,
    /// `gmm.json` from detect, echoed into the report.
    #[arg(long)]
    gmm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn report(a: ReportArgs) -> CmdResult {
    let mut rec = Recorder::new("report");
    if !(0.0..=1.0).contains(&a.gamma) {
        return Err(anyhow!("--gamma must lie in [0, 1]")).usage();
    }
    let data = read_dataset(&a.data, &mut rec)?;
    let gold = gold_flags(&data)?;
    let scored = read_scored(&a.scored, &data, &mut rec)?;
    let gmm: Option<GmmModel> = match &a.gmm {
        Some(p) => {
            let text = rec.read_string(p).usage()?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display())).usage()?)
        }
        None => None,
    };
    let report = detection_metrics(&scored, &gold, a.gamma, gmm.as_ref()).map_err(noise_failure)?;
    emit_report(&report, &a.out).map_err(noise_failure)?;
    rec.record_output(&a.out.join("detection.json")).runtime()?;
    rec.record_output(&a.out.join("histogram.csv")).runtime()?;
    rec.finish(&a.out.join("manifest.json")).runtime()?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset carrying gold_is_noisy flags.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    gammas: String,
    #[arg(long, default_value = "5,10,25,50")]
    neighbors: String,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

pub fn sweep(a: SweepArgs) -> CmdResult {
    let mut rec = Recorder::new("sweep");
    let config = load_config(&a.pipeline, &mut rec)?;
    let gammas: Vec<f64> = parse_list(&a.gammas, "--gammas")?;
    if gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(anyhow!("--gammas values must lie in [0, 1]")).usage();
    }
    let counts: Vec<usize> = parse_list(&a.neighbors, "--neighbors")?;
    let data = read_dataset(&a.data, &mut rec)?;
    let gold = gold_flags(&data)?;
    let external = external_corpus(&config, &mut rec)?;
    let scorer = metric_scorer(&config, &mut rec)?;

    let run = run_detection(&data, &config, scorer.as_ref(), external.as_deref()).map_err(pipeline_failure)?;
    let rows = gamma_sweep(&run.scoring.samples, &gold, &gammas);
    ensure_dir(&a.out)?;
    let gpath = a.out.join("gamma_sweep.csv");
    emit_gamma_sweep(&rows, &gpath).map_err(noise_failure)?;
    rec.record_output(&gpath).runtime()?;

    let nrows = neighbor_sweep(&data, &gold, &config, scorer.as_ref(), external.as_deref(), &counts)
        .map_err(pipeline_failure)?;
    let npath = a.out.join("neighbor_sweep.csv");
    emit_neighbor_sweep(&nrows, &npath).map_err(noise_failure)?;
    rec.record_output(&npath).runtime()?;
    rec.finish(&a.out.join("manifest.json")).runtime()?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 250)]
    facts: usize,
    /// Training samples per fact.
    #[arg(long, default_value_t = 4)]
    paraphrases: usize,
    /// Size of the external annotation corpus.
    #[arg(long, default_value_t = 200)]
    external: usize,
    #[arg(long, default_value_t = 1.0)]
    mu_clean: f64,
    #[arg(long, default_value_t = 2.0)]
    mu_noisy: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let mut rec = Recorder::new("synth");
    if a.facts == 0 || a.paraphrases == 0 {
        return Err(anyhow!("--facts and --paraphrases must be positive")).usage();
    }
    let corpus = synthetic_corpus(&SynthCorpusConfig {
        n_facts: a.facts,
        paraphrases: a.paraphrases,
        n_external: a.external,
        mu_clean: a.mu_clean,
        mu_noisy: a.mu_noisy,
        noise_sigma: a.noise_sigma,
        seed: a.seed,
    });
    corpus.spec.validate().usage()?;
    let config = PipelineConfig {
        synthetic_spec_path: Some("synthetic_spec.json".into()),
        seed: a.seed,
        ..PipelineConfig::default()
    };
    let mut external = corpus.external.join("\n");
    external.push('\n');

    ensure_dir(&a.out)?;
    rec.write(&a.out.join("train.jsonl"), to_jsonl(&corpus.train).as_bytes()).runtime()?;
    rec.write(&a.out.join("test.jsonl"), to_jsonl(&corpus.test).as_bytes()).runtime()?;
    rec.write(&a.out.join("external.txt"), external.as_bytes()).runtime()?;
    rec.write(&a.out.join("synthetic_spec.json"), &json(&corpus.spec)).runtime()?;
    rec.write(&a.out.join("config.json"), &json(&config)).runtime()?;
    eprintln!(
        "{} train, {} test, {} external annotations -> {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.external.len(),
        a.out.display()
    );
    rec.finish(&a.out.join("manifest.json")).runtime()?;
    Ok(())
}
