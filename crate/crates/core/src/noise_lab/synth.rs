use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Demonstration;
use crate::scorer::{QueryFacts, SyntheticScorerSpec};

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "do", "gu", "ri", "fe", "bo", "xu",
];
const DOMAINS: [(&str, f64); 3] = [("d_low", 0.5), ("d_mid", 1.0), ("d_high", 2.0)];

/// Knobs for [`synthetic_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpusConfig {
    /// Facts; every fact yields `paraphrases` training samples.
    pub n_facts: usize,
    pub paraphrases: usize,
    pub n_external: usize,
    pub mu_clean: f64,
    pub mu_noisy: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self { n_facts: 334, paraphrases: 3, n_external: 500, mu_clean: 1.0, mu_noisy: 2.0, noise_sigma: 0.1, seed: 0 }
    }
}

/// A clean training set, one test query per fact, an external annotation
/// corpus disjoint from the training answers, and the scorer spec that knows
/// which answer matches which query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub train: Vec<Demonstration>,
    pub test: Vec<Demonstration>,
    pub external: Vec<String>,
    pub spec: SyntheticScorerSpec,
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect()
}

fn unique_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = word(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Generates a corpus whose losses follow the bias model with
/// `b(y) ~ U[0.5, 2]` and domain multipliers `{0.5, 1, 2}`.
pub fn synthetic_corpus(cfg: &SynthCorpusConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = BTreeSet::new();
    let mut spec = SyntheticScorerSpec {
        base_loss: BTreeMap::new(),
        domain_multiplier: DOMAINS.iter().map(|(d, m)| (d.to_string(), *m)).collect(),
        queries: BTreeMap::new(),
        mu_clean: cfg.mu_clean,
        mu_noisy: cfg.mu_noisy,
        noise_sigma: cfg.noise_sigma,
        seed: cfg.seed,
    };

    let mut train = Vec::with_capacity(cfg.n_facts * cfg.paraphrases);
    let mut test = Vec::with_capacity(cfg.n_facts);
    for f in 0..cfg.n_facts {
        let domain = DOMAINS[rng.gen_range(0..DOMAINS.len())].0;
        let content = unique_words(&mut rng, 3, &mut taken);
        let (a, b, c) = (&content[0], &content[1], &content[2]);
        let answer_len = rng.gen_range(1..=3);
        let answer = unique_words(&mut rng, answer_len, &mut taken).join(" ");
        spec.base_loss.insert(answer.clone(), rng.gen_range(0.5..2.0));

        let phrasings = [
            format!("what is the {a} of {b} {c}"),
            format!("tell me the {a} for {b} {c}"),
            format!("{b} {c} has which {a}"),
            format!("name the {a} that {b} {c} holds"),
        ];
        for (p, query) in phrasings.iter().cycle().take(cfg.paraphrases).enumerate() {
            let query = if p >= phrasings.len() { format!("{query} {p}") } else { query.clone() };
            spec.queries.insert(query.clone(), QueryFacts { domain: domain.into(), answer: answer.clone() });
            train.push(Demonstration::new(format!("f{f:05}p{p}"), query, answer.clone()).with_topic(domain));
        }
        let tq = format!("which {a} does {b} {c} have");
        spec.queries.insert(tq.clone(), QueryFacts { domain: domain.into(), answer: answer.clone() });
        test.push(Demonstration::new(format!("t{f:05}"), tq, answer).with_topic(domain));
    }
    train.shuffle(&mut rng);

    let external: Vec<String> = (0..cfg.n_external)
        .map(|_| {
            let len = rng.gen_range(1..=3);
            let text = unique_words(&mut rng, len, &mut taken).join(" ");
            spec.base_loss.insert(text.clone(), rng.gen_range(0.5..2.0));
            text
        })
        .collect();

    SynthCorpus { train, test, external, spec }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SynthCorpusConfig { n_facts: 20, n_external: 30, ..Default::default() };
        let a = synthetic_corpus(&cfg);
        assert_eq!(a.train.len(), 60);
        assert_eq!(a.test.len(), 20);
        assert_eq!(a.external.len(), 30);
        assert_eq!(a, synthetic_corpus(&cfg));
        a.spec.validate().unwrap();
        let ids: BTreeSet<_> = a.train.iter().map(|d| &d.sample_id).collect();
        assert_eq!(ids.len(), 60);
        for d in &a.train {
            assert!(a.spec.is_match(&d.query, &d.annotation));
            assert!(!a.external.contains(&d.annotation));
        }
    }
}
