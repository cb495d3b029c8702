//! Shared fixtures for the criterion benches.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cleanscore_core::dataset::Demonstration;
use cleanscore_core::noise_lab::{inject_noise, synthetic_corpus, NoiseKind, NoiseSpec, SynthCorpusConfig};
use cleanscore_core::scorer::SyntheticScorer;

/// A noisy synthetic training set and a scorer that knows its facts.
pub fn noisy_corpus(n_facts: usize, paraphrases: usize) -> (Vec<Demonstration>, SyntheticScorer) {
    let corpus = synthetic_corpus(&SynthCorpusConfig { n_facts, paraphrases, seed: 11, ..Default::default() });
    let spec = NoiseSpec { kind: NoiseKind::Relevant, ratio: 0.2, external_corpus_path: None, seed: 5 };
    let data = inject_noise(&corpus.train, &spec, None).expect("noise injection");
    (data, SyntheticScorer::new(corpus.spec).expect("valid spec"))
}

/// Two-cluster scores resembling cleanliness values: 80% near 1, 20% near 2.
pub fn bimodal_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let noisy = rng.gen_bool(0.2);
            let centre = if noisy { 2.0 } else { 1.0 };
            (centre + rng.gen_range(-0.3..0.3), noisy)
        })
        .unzip()
}
