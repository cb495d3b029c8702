use std::collections::BTreeSet;

use super::ScorerError;

/// Greedy text completion used for the final ICL inference step.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str, max_new_tokens: usize) -> Result<String, ScorerError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, prompt: &str, max_new_tokens: usize) -> Result<String, ScorerError> {
        (**self).generate(prompt, max_new_tokens)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(&self, prompt: &str, max_new_tokens: usize) -> Result<String, ScorerError> {
        (**self).generate(prompt, max_new_tokens)
    }
}

/// Deterministic stand-in for an LLM that copies answers from the prompt.
///
/// The prompt is split into blank-line separated blocks of `Key: value`
/// lines. The last block is the test query; the generator returns the
/// `Answer` of the demonstration whose `Question` shares the largest fraction
/// of words with the test question (earliest block on ties), truncated to
/// `max_new_tokens` words. With no demonstrations it returns an empty string.
#[derive(Debug, Clone, Default)]
pub struct SyntheticGenerator;

fn field<'a>(block: &'a str, key: &str) -> Option<&'a str> {
    block.lines().find_map(|line| {
        let (k, v) = line.split_once(':')?;
        (k.trim() == key).then(|| v.trim())
    })
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

impl Generator for SyntheticGenerator {
    fn generate(&self, prompt: &str, max_new_tokens: usize) -> Result<String, ScorerError> {
        let blocks: Vec<&str> = prompt.split("\n\n").collect();
        let Some((query_block, demos)) = blocks.split_last() else {
            return Ok(String::new());
        };
        let target = words(field(query_block, "Question").unwrap_or(query_block));

        let mut best: Option<(f64, &str)> = None;
        for demo in demos {
            let Some(answer) = field(demo, "Answer") else { continue };
            let sim = overlap(&target, &words(field(demo, "Question").unwrap_or("")));
            if best.map_or(true, |(s, _)| sim > s) {
                best = Some((sim, answer));
            }
        }
        Ok(best
            .map(|(_, a)| a.split_whitespace().take(max_new_tokens).collect::<Vec<_>>().join(" "))
            .unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copies_most_similar_answer() {
        let prompt = "Question: who wrote hamlet\nAnswer: shakespeare\n\n\
                      Question: capital of france\nAnswer: paris\n\n\
                      Question: what is the capital of france\nAnswer:";
        assert_eq!(SyntheticGenerator.generate(prompt, 16).unwrap(), "paris");
    }

    #[test]
    fn zero_shot_is_empty() {
        assert_eq!(SyntheticGenerator.generate("Question: anything\nAnswer:", 8).unwrap(), "");
    }

    #[test]
    fn truncates_to_budget() {
        let prompt = "Question: q\nAnswer: a b c d e\n\nQuestion: q\nAnswer:";
        assert_eq!(SyntheticGenerator.generate(prompt, 2).unwrap(), "a b");
    }
}
