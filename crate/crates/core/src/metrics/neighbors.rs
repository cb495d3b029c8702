use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Where neighbour annotations are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CorpusKind {
    /// Every observed annotation of the dataset being cleansed.
    #[default]
    InDistribution,
    /// Annotations taken from an external file.
    OutDistribution,
}

/// One candidate neighbour annotation and its backend tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborAnnotation {
    pub text: String,
    pub tokens: Vec<u32>,
}

impl NeighborAnnotation {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// The fixed neighbour annotations shared by every sample of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub annotations: Vec<NeighborAnnotation>,
    pub radius: usize,
    pub t_max: usize,
    pub corpus_kind: CorpusKind,
    pub seed: u64,
}

impl NeighborSet {
    pub fn count(&self) -> usize {
        self.annotations.len()
    }
}

/// Largest edit distance between an annotation of length `observed_len` and
/// any neighbour no longer than `t_max`.
pub fn neighbor_radius(observed_len: usize, t_max: usize) -> usize {
    observed_len.max(t_max)
}

/// Samples `n_neighbor` annotations uniformly without replacement from the
/// corpus entries whose token length is at most `t_max`. Empty entries are
/// never eligible since they cannot be scored.
pub fn build_neighbor_set(
    corpus: &[NeighborAnnotation],
    t_max: usize,
    n_neighbor: usize,
    seed: u64,
    corpus_kind: CorpusKind,
) -> Result<NeighborSet, MetricsError> {
    let eligible: Vec<&NeighborAnnotation> = corpus
        .iter()
        .filter(|a| !a.is_empty() && a.len() <= t_max)
        .collect();
    if n_neighbor == 0 || eligible.len() < n_neighbor {
        return Err(MetricsError::InsufficientCorpus {
            available: eligible.len(),
            needed: n_neighbor.max(1),
            t_max,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, eligible.len(), n_neighbor);
    let annotations = picked.iter().map(|i| eligible[i].clone()).collect();

    Ok(NeighborSet {
        annotations,
        radius: t_max,
        t_max,
        corpus_kind,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::edit_distance;
    use proptest::prelude::*;

    fn ann(len: usize, tag: u32) -> NeighborAnnotation {
        NeighborAnnotation {
            text: format!("a{tag}"),
            tokens: (0..len as u32).map(|t| t * 31 + tag).collect(),
        }
    }

    #[test]
    fn long_entries_are_filtered() {
        let corpus = vec![ann(3, 1), ann(5, 2), ann(100, 3)];
        for seed in 0..20 {
            let set = build_neighbor_set(&corpus, 10, 2, seed, CorpusKind::InDistribution).unwrap();
            assert_eq!(set.count(), 2);
            assert!(set.annotations.iter().all(|a| a.len() == 3 || a.len() == 5));
        }
    }

    #[test]
    fn exhaustive_sample_is_a_permutation() {
        let corpus: Vec<_> = (0..6).map(|i| ann(2, i)).collect();
        let set = build_neighbor_set(&corpus, 4, 6, 9, CorpusKind::InDistribution).unwrap();
        let mut texts: Vec<_> = set.annotations.iter().map(|a| a.text.clone()).collect();
        texts.sort();
        let mut want: Vec<_> = corpus.iter().map(|a| a.text.clone()).collect();
        want.sort();
        assert_eq!(texts, want);
    }

    #[test]
    fn deterministic_under_seed() {
        let corpus: Vec<_> = (0..40).map(|i| ann(1 + (i as usize % 7), i)).collect();
        let a = build_neighbor_set(&corpus, 6, 10, 1234, CorpusKind::OutDistribution).unwrap();
        let b = build_neighbor_set(&corpus, 6, 10, 1234, CorpusKind::OutDistribution).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.radius, 6);
        assert_eq!(a.corpus_kind, CorpusKind::OutDistribution);
    }

    #[test]
    fn insufficient_corpus() {
        let corpus = vec![ann(3, 1), ann(50, 2)];
        let err = build_neighbor_set(&corpus, 10, 2, 0, CorpusKind::InDistribution).unwrap_err();
        assert_eq!(
            err,
            MetricsError::InsufficientCorpus { available: 1, needed: 2, t_max: 10 }
        );
    }

    #[test]
    fn radius_examples() {
        assert_eq!(neighbor_radius(4, 10), 10);
        assert_eq!(neighbor_radius(12, 10), 12);
        assert_eq!(neighbor_radius(7, 7), 7);
    }

    proptest! {
        #[test]
        fn radius_bound_holds(
            lens in proptest::collection::vec(1usize..15, 5..30),
            t_max in 1usize..15,
            y in proptest::collection::vec(0u32..4, 0..20),
            seed in any::<u64>(),
        ) {
            let corpus: Vec<_> = lens.iter().enumerate().map(|(i, &l)| ann(l, i as u32 % 4)).collect();
            if let Ok(set) = build_neighbor_set(&corpus, t_max, 1, seed, CorpusKind::InDistribution) {
                for n in &set.annotations {
                    prop_assert!(n.len() <= t_max);
                    prop_assert!(edit_distance(&y, &n.tokens) <= neighbor_radius(y.len(), t_max));
                }
            }
        }
    }
}
