use std::collections::{HashMap, HashSet};

use super::{Capabilities, Direction, TranslationBackend};
use crate::corpus::{ParallelCorpus, Sentence};
use crate::error::{Error, Result};

/// How the mock treats events its table cannot explain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// Unknown input words are copied with probability 1; any other
    /// zero-probability event gets `1/|V|`.
    CopyThrough,
    /// Every output token has probability `1/|V|`.
    Uniform,
}

/// Co-occurrence translation table with a monotone one-to-one alignment.
///
/// `p(t | s) = cooc(s, t) / sum_t' cooc(s, t')`, where `cooc` counts the
/// sentence pairs in which both word types occur. Translation maps each word
/// to its most probable candidate (ties to the lexicographically smallest);
/// scoring aligns target position `j` with source position `j`.
#[derive(Debug, Clone)]
pub struct LexicalMockBackend {
    table: HashMap<String, Vec<(String, f64)>>,
    best: HashMap<String, String>,
    output_vocab_size: usize,
    fallback: Fallback,
    direction: Direction,
}

impl LexicalMockBackend {
    /// Trains on `pairs`; `Direction::Rev` translates target to source.
    pub fn train(pairs: &ParallelCorpus, direction: Direction) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyCorpus(
                "cannot train the mock translator on an empty corpus",
            ));
        }
        let mut cooc: HashMap<&str, HashMap<&str, u64>> = HashMap::new();
        let mut outputs: HashSet<&str> = HashSet::new();
        for pair in pairs.pairs() {
            let (input, output) = match direction {
                Direction::Fwd => (&pair.source, &pair.target),
                Direction::Rev => (&pair.target, &pair.source),
            };
            let inputs: HashSet<&str> = input.iter().map(String::as_str).collect();
            let outs: HashSet<&str> = output.iter().map(String::as_str).collect();
            outputs.extend(&outs);
            for s in &inputs {
                let row = cooc.entry(s).or_default();
                for t in &outs {
                    *row.entry(t).or_default() += 1;
                }
            }
        }
        let mut table = HashMap::with_capacity(cooc.len());
        let mut best = HashMap::with_capacity(cooc.len());
        for (s, row) in cooc {
            let total: u64 = row.values().sum();
            let mut candidates: Vec<(String, u64)> =
                row.into_iter().map(|(t, c)| (t.to_owned(), c)).collect();
            candidates.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            best.insert(s.to_owned(), candidates[0].0.clone());
            let mut probs: Vec<(String, f64)> = candidates
                .into_iter()
                .map(|(t, c)| (t, c as f64 / total as f64))
                .collect();
            probs.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            table.insert(s.to_owned(), probs);
        }
        Ok(LexicalMockBackend {
            table,
            best,
            output_vocab_size: outputs.len(),
            fallback: Fallback::CopyThrough,
            direction,
        })
    }

    /// Untrained mock: copy-through translation, uniform scores over
    /// `vocab_size` output words.
    pub fn uniform(vocab_size: usize, direction: Direction) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::InvalidArgument(
                "uniform mock needs a non-empty vocabulary".into(),
            ));
        }
        Ok(LexicalMockBackend {
            table: HashMap::new(),
            best: HashMap::new(),
            output_vocab_size: vocab_size,
            fallback: Fallback::Uniform,
            direction,
        })
    }

    pub fn fallback(&self) -> Fallback {
        self.fallback
    }

    pub fn output_vocab_size(&self) -> usize {
        self.output_vocab_size
    }

    /// `p(output | input)` from the table, `None` for an unknown input word.
    pub fn table_prob(&self, input: &str, output: &str) -> Option<f64> {
        let row = self.table.get(input)?;
        Some(
            row.binary_search_by(|(t, _)| t.as_str().cmp(output))
                .map(|i| row[i].1)
                .unwrap_or(0.0),
        )
    }

    fn uniform_prob(&self) -> f64 {
        1.0 / self.output_vocab_size.max(1) as f64
    }

    fn prob(&self, input: Option<&str>, output: &str) -> f64 {
        if self.fallback == Fallback::Uniform {
            return self.uniform_prob();
        }
        let p = match input {
            Some(s) => match self.table_prob(s, output) {
                Some(p) => p,
                None if s == output => 1.0,
                None => 0.0,
            },
            None => 0.0,
        };
        if p > 0.0 {
            p
        } else {
            self.uniform_prob()
        }
    }
}

impl TranslationBackend for LexicalMockBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            translate: true,
            score: true,
            direction: self.direction,
        }
    }

    fn translate(&self, source: &[String]) -> Result<Sentence> {
        Ok(source
            .iter()
            .map(|w| self.best.get(w).cloned().unwrap_or_else(|| w.clone()))
            .collect())
    }

    fn token_logprobs(&self, source: &[String], target: &[String]) -> Result<Vec<f64>> {
        Ok(target
            .iter()
            .enumerate()
            .map(|(j, t)| self.prob(source.get(j).map(String::as_str), t).ln())
            .collect())
    }
}

/// Forward-direction mock trained on `pairs`.
pub fn train_mock(pairs: &ParallelCorpus) -> Result<LexicalMockBackend> {
    LexicalMockBackend::train(pairs, Direction::Fwd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, SentencePair};

    fn corpus(pairs: &[(&str, &str)]) -> ParallelCorpus {
        ParallelCorpus::new(
            pairs
                .iter()
                .map(|(s, t)| SentencePair {
                    source: tokenize(s),
                    target: tokenize(t),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn argmax_translation() {
        let mock = train_mock(&corpus(&[
            ("cat", "katze"),
            ("the cat", "die katze"),
            ("cat sleeps", "katze schläft"),
        ]))
        .unwrap();
        assert_eq!(mock.translate(&tokenize("cat")).unwrap(), vec!["katze"]);
        assert_eq!(mock.translate(&tokenize("dog")).unwrap(), vec!["dog"]);
        assert!(mock.translate(&[]).unwrap().is_empty());
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let mock = train_mock(&corpus(&[("a", "y x")])).unwrap();
        assert_eq!(mock.translate(&tokenize("a")).unwrap(), vec!["x"]);
    }

    #[test]
    fn probabilities_from_cooccurrence() {
        let mock = train_mock(&corpus(&[("a", "x")])).unwrap();
        assert_eq!(mock.table_prob("a", "x"), Some(1.0));

        let mock = train_mock(&corpus(&[("a", "x"), ("a", "x"), ("a", "y")])).unwrap();
        assert!((mock.table_prob("a", "x").unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let sum: f64 = ["x", "y"]
            .iter()
            .map(|t| mock.table_prob("a", t).unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn retraining_on_superset_tracks_counts() {
        let small = corpus(&[("a", "x"), ("a", "y")]);
        let big = corpus(&[("a", "x"), ("a", "y"), ("a", "x"), ("a", "x")]);
        let (p_small, p_big) = (
            train_mock(&small).unwrap().table_prob("a", "x").unwrap(),
            train_mock(&big).unwrap().table_prob("a", "x").unwrap(),
        );
        assert!((p_small - 0.5).abs() < 1e-15);
        assert!((p_big - 0.75).abs() < 1e-15);
        assert!(p_big > p_small);
    }

    #[test]
    fn covered_pair_scores_are_table_logprobs() {
        let mock = train_mock(&corpus(&[
            ("a b", "x y"),
            ("a", "x"),
            ("b", "y"),
            ("b", "z"),
        ]))
        .unwrap();
        // cooc(a,x)=2 cooc(a,y)=1; cooc(b,x)=1 cooc(b,y)=2 cooc(b,z)=1
        let lp = mock
            .token_logprobs(&tokenize("a b"), &tokenize("x y"))
            .unwrap();
        assert!((lp[0] - (2.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((lp[1] - (2.0f64 / 4.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_scores() {
        let mock = LexicalMockBackend::uniform(37, Direction::Rev).unwrap();
        let lp = mock
            .token_logprobs(&tokenize("p q"), &tokenize("a b c"))
            .unwrap();
        assert!(lp.iter().all(|&v| (v - (1.0f64 / 37.0).ln()).abs() < 1e-15));
    }

    #[test]
    fn copy_through_scores() {
        let mock = train_mock(&corpus(&[("a", "x"), ("b", "y")])).unwrap();
        let lp = mock
            .token_logprobs(&tokenize("q a"), &tokenize("q y"))
            .unwrap();
        assert_eq!(lp[0], 0.0);
        assert!((lp[1] - (0.5f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn reverse_direction() {
        let mock = LexicalMockBackend::train(&corpus(&[("cat", "katze")]), Direction::Rev).unwrap();
        assert_eq!(mock.translate(&tokenize("katze")).unwrap(), vec!["cat"]);
    }
}
