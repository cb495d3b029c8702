use std::collections::HashSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NoiseLabError;
use crate::dataset::Demonstration;

const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// Annotation replaced by one from an unrelated external corpus.
    Irrelevant,
    /// Annotation swapped with another sample's, same topic when tagged.
    Relevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    #[serde(default)]
    pub external_corpus_path: Option<PathBuf>,
    pub seed: u64,
}

/// Number of samples a ratio corrupts or removes.
pub fn noise_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

fn check_ratio(ratio: f64) -> Result<(), NoiseLabError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(NoiseLabError::InvalidRatio(ratio));
    }
    Ok(())
}

/// Corrupts exactly `round(ratio · N)` annotations chosen uniformly by seed
/// and sets `gold_is_noisy` on every sample. Queries are never touched.
///
/// `external_corpus` is required for [`NoiseKind::Irrelevant`]; entries that
/// also occur as annotations in `dataset` are ignored.
pub fn inject_noise(
    dataset: &[Demonstration],
    spec: &NoiseSpec,
    external_corpus: Option<&[String]>,
) -> Result<Vec<Demonstration>, NoiseLabError> {
    check_ratio(spec.ratio)?;
    let n = dataset.len();
    let m = noise_count(spec.ratio, n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen = rand::seq::index::sample(&mut rng, n, m).into_vec();
    chosen.sort_unstable();

    let originals: Vec<&str> = dataset.iter().map(|d| d.annotation.as_str()).collect();
    let mut out: Vec<Demonstration> = dataset
        .iter()
        .cloned()
        .map(|mut d| {
            d.gold_is_noisy = Some(false);
            d
        })
        .collect();
    if m == 0 {
        return Ok(out);
    }

    match spec.kind {
        NoiseKind::Irrelevant => {
            let own: HashSet<&str> = originals.iter().copied().collect();
            let external: Vec<&str> = external_corpus
                .ok_or_else(|| NoiseLabError::CorpusTooSmall("irrelevant noise needs an external corpus".into()))?
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty() && !own.contains(s))
                .collect();
            if external.is_empty() {
                return Err(NoiseLabError::CorpusTooSmall(
                    "external corpus has no annotations disjoint from the dataset".into(),
                ));
            }
            for &i in &chosen {
                out[i].annotation = draw(&mut rng, originals[i], &dataset[i].sample_id, |r| {
                    external[r.gen_range(0..external.len())]
                })?
                .to_string();
                out[i].gold_is_noisy = Some(true);
            }
        }
        NoiseKind::Relevant => {
            if n < 2 {
                return Err(NoiseLabError::CorpusTooSmall("relevant noise needs at least 2 samples".into()));
            }
            for &i in &chosen {
                let same_topic: Vec<usize> = match &dataset[i].topic {
                    Some(t) => (0..n).filter(|&j| j != i && dataset[j].topic.as_ref() == Some(t)).collect(),
                    None => Vec::new(),
                };
                let donors: Vec<usize> = if same_topic.is_empty() {
                    (0..n).filter(|&j| j != i).collect()
                } else {
                    same_topic
                };
                out[i].annotation = draw(&mut rng, originals[i], &dataset[i].sample_id, |r| {
                    originals[donors[r.gen_range(0..donors.len())]]
                })?
                .to_string();
                out[i].gold_is_noisy = Some(true);
            }
        }
    }
    Ok(out)
}

fn draw<'a>(
    rng: &mut ChaCha8Rng,
    original: &str,
    sample_id: &str,
    mut pick: impl FnMut(&mut ChaCha8Rng) -> &'a str,
) -> Result<&'a str, NoiseLabError> {
    for _ in 0..MAX_REDRAWS {
        let candidate = pick(rng);
        if candidate != original {
            return Ok(candidate);
        }
    }
    Err(NoiseLabError::CannotAvoidIdentity(sample_id.to_string()))
}

/// Naive baseline: drops `round(ratio · N)` samples chosen uniformly.
pub fn baseline_random_delete(
    dataset: &[Demonstration],
    ratio: f64,
    seed: u64,
) -> Result<Vec<Demonstration>, NoiseLabError> {
    check_ratio(ratio)?;
    let m = noise_count(ratio, dataset.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dropped: HashSet<usize> = rand::seq::index::sample(&mut rng, dataset.len(), m).into_iter().collect();
    Ok(dataset
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, d)| d.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> Vec<Demonstration> {
        (0..n)
            .map(|i| {
                Demonstration::new(format!("s{i:03}"), format!("query {i}"), format!("answer {i}"))
                    .with_topic(if i % 2 == 0 { "even" } else { "odd" })
            })
            .collect()
    }

    fn spec(kind: NoiseKind, ratio: f64) -> NoiseSpec {
        NoiseSpec { kind, ratio, external_corpus_path: None, seed: 42 }
    }

    fn external() -> Vec<String> {
        (0..20).map(|i| format!("unrelated {i}")).collect()
    }

    #[test]
    fn exact_count() {
        let d = data(10);
        for kind in [NoiseKind::Relevant, NoiseKind::Irrelevant] {
            let out = inject_noise(&d, &spec(kind, 0.4), Some(&external())).unwrap();
            assert_eq!(out.iter().filter(|s| s.gold_is_noisy == Some(true)).count(), 4);
        }
    }

    #[test]
    fn zero_ratio_is_identity() {
        let d = data(10);
        let out = inject_noise(&d, &spec(NoiseKind::Relevant, 0.0), None).unwrap();
        for (a, b) in d.iter().zip(&out) {
            assert_eq!(a.annotation, b.annotation);
            assert_eq!(b.gold_is_noisy, Some(false));
        }
    }

    #[test]
    fn full_relevant_changes_everything_within_topic() {
        let d = data(12);
        let out = inject_noise(&d, &spec(NoiseKind::Relevant, 1.0), None).unwrap();
        for (a, b) in d.iter().zip(&out) {
            assert_ne!(a.annotation, b.annotation);
            assert_eq!(a.query, b.query);
            let donor: usize = b.annotation.trim_start_matches("answer ").parse().unwrap();
            assert_eq!(donor % 2, a.sample_id[1..].parse::<usize>().unwrap() % 2);
        }
    }

    #[test]
    fn only_flagged_samples_change() {
        let d = data(50);
        let out = inject_noise(&d, &spec(NoiseKind::Irrelevant, 0.3), Some(&external())).unwrap();
        for (a, b) in d.iter().zip(&out) {
            assert_eq!(a.query, b.query);
            assert_eq!(a.annotation != b.annotation, b.gold_is_noisy == Some(true));
        }
    }

    #[test]
    fn deterministic() {
        let d = data(30);
        let a = inject_noise(&d, &spec(NoiseKind::Relevant, 0.5), None).unwrap();
        let b = inject_noise(&d, &spec(NoiseKind::Relevant, 0.5), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_paths() {
        let d = data(4);
        assert!(matches!(
            inject_noise(&d, &spec(NoiseKind::Irrelevant, 0.5), None),
            Err(NoiseLabError::CorpusTooSmall(_))
        ));
        let overlap = vec!["answer 1".to_string()];
        assert!(matches!(
            inject_noise(&d, &spec(NoiseKind::Irrelevant, 0.5), Some(&overlap)),
            Err(NoiseLabError::CorpusTooSmall(_))
        ));
        let same: Vec<_> = (0..3).map(|i| Demonstration::new(format!("{i}"), "q", "same")).collect();
        assert!(matches!(
            inject_noise(&same, &spec(NoiseKind::Relevant, 0.5), None),
            Err(NoiseLabError::CannotAvoidIdentity(_))
        ));
        assert!(matches!(
            inject_noise(&d[..1], &spec(NoiseKind::Relevant, 1.0), None),
            Err(NoiseLabError::CorpusTooSmall(_))
        ));
        assert!(matches!(
            inject_noise(&d, &spec(NoiseKind::Relevant, 1.5), None),
            Err(NoiseLabError::InvalidRatio(_))
        ));
    }

    #[test]
    fn random_delete_counts() {
        let d = data(10);
        assert_eq!(baseline_random_delete(&d, 0.0, 1).unwrap(), d);
        assert!(baseline_random_delete(&d, 1.0, 1).unwrap().is_empty());
        let kept = baseline_random_delete(&d, 0.6, 1).unwrap();
        assert_eq!(kept.len(), 4);
        assert_eq!(kept, baseline_random_delete(&d, 0.6, 1).unwrap());
        assert!(kept.windows(2).all(|w| w[0].sample_id < w[1].sample_id));
    }
}
