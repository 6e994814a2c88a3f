//! Synthetic word-substitution translation task.
//!
//! Source sentences come from a Zipfian Markov chain over a pseudo-word
//! vocabulary, so frequent n-grams recur across sentences. Each source word
//! translates to one fixed target word, position by position. A share of the
//! pool is off-distribution noise built from a separate vocabulary, and the
//! pool can optionally carry exact copies of a few sentences; the test set is
//! drawn from the main chain only.

use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, SeededRng, Sentence, SentencePair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub pool_size: usize,
    pub test_size: usize,
    pub vocab_size: usize,
    pub noise_vocab_size: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Number of distinct sentences that are copied into the pool repeatedly.
    pub duplicate_sources: usize,
    pub duplicate_fraction: f64,
    pub noise_fraction: f64,
    /// Probability of following a word's preferred successor.
    pub stickiness: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            pool_size: 5_000,
            test_size: 500,
            vocab_size: 2_000,
            noise_vocab_size: 3_000,
            min_length: 4,
            max_length: 14,
            duplicate_sources: 40,
            duplicate_fraction: 0.0,
            noise_fraction: 0.15,
            stickiness: 0.6,
            seed: crate::corpus::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub pool: ParallelCorpus,
    pub test: ParallelCorpus,
    /// Source to target word pairs of the substitution, frequent words first.
    pub lexicon: Vec<(String, String)>,
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

fn pseudo_word(mut index: usize, prefix: &str) -> String {
    let mut word = String::from(prefix);
    loop {
        word.push_str(ONSETS[index % ONSETS.len()]);
        index /= ONSETS.len();
        word.push_str(VOWELS[index % VOWELS.len()]);
        index /= VOWELS.len();
        if index == 0 {
            return word;
        }
        index -= 1;
    }
}

struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    fn new(n: usize) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|r| {
                acc += 1.0 / r as f64;
                acc
            })
            .collect();
        Zipf { cumulative }
    }

    fn sample(&self, rng: &mut SeededRng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let x = rng.next_f64() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

struct Chain {
    zipf: Zipf,
    successor: Vec<usize>,
    stickiness: f64,
}

impl Chain {
    fn new(vocab_size: usize, stickiness: f64, rng: &mut SeededRng) -> Self {
        let zipf = Zipf::new(vocab_size);
        let successor = (0..vocab_size).map(|_| zipf.sample(rng)).collect();
        Chain {
            zipf,
            successor,
            stickiness,
        }
    }

    fn sentence(&self, length: usize, rng: &mut SeededRng) -> Vec<usize> {
        let mut words = vec![self.zipf.sample(rng)];
        while words.len() < length {
            let last = *words.last().expect("non-empty");
            let next = if rng.next_f64() < self.stickiness {
                self.successor[last]
            } else {
                self.zipf.sample(rng)
            };
            words.push(next);
        }
        words
    }
}

fn check(config: &SyntheticConfig) -> Result<()> {
    let fraction_ok = |f: f64| (0.0..=1.0).contains(&f);
    if config.vocab_size == 0 || config.noise_vocab_size == 0 {
        return Err(Error::InvalidArgument(
            "vocabularies must be non-empty".into(),
        ));
    }
    if config.min_length == 0 || config.min_length > config.max_length {
        return Err(Error::InvalidArgument(
            "need 1 <= min_length <= max_length".into(),
        ));
    }
    if !(fraction_ok(config.duplicate_fraction)
        && fraction_ok(config.noise_fraction)
        && fraction_ok(config.stickiness)
        && config.duplicate_fraction + config.noise_fraction <= 1.0)
    {
        return Err(Error::InvalidArgument(
            "fractions must lie in [0, 1] and sum to at most 1".into(),
        ));
    }
    if config.duplicate_fraction > 0.0 && config.duplicate_sources == 0 {
        return Err(Error::InvalidArgument(
            "duplicates requested without duplicate sources".into(),
        ));
    }
    if config.pool_size == 0 || config.test_size == 0 {
        return Err(Error::InvalidArgument(
            "pool and test sets must be non-empty".into(),
        ));
    }
    Ok(())
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticTask> {
    check(config)?;
    let mut rng = SeededRng::new(config.seed);
    let source_vocab: Vec<String> = (0..config.vocab_size).map(|i| pseudo_word(i, "")).collect();
    let target_vocab: Vec<String> = (0..config.vocab_size)
        .map(|i| pseudo_word(i, "x"))
        .collect();
    let noise_vocab: Vec<String> = (0..config.noise_vocab_size)
        .map(|i| pseudo_word(i + config.vocab_size, ""))
        .collect();
    let noise_targets: Vec<String> = (0..config.noise_vocab_size)
        .map(|i| pseudo_word(i + config.vocab_size, "x"))
        .collect();

    let chain = Chain::new(config.vocab_size, config.stickiness, &mut rng);
    let length = |rng: &mut SeededRng| {
        config.min_length + rng.below((config.max_length - config.min_length + 1) as u64) as usize
    };
    let pair = |ids: &[usize], src: &[String], tgt: &[String]| SentencePair {
        source: ids.iter().map(|&i| src[i].clone()).collect::<Sentence>(),
        target: ids.iter().map(|&i| tgt[i].clone()).collect::<Sentence>(),
    };

    let duplicates: Vec<Vec<usize>> = (0..config.duplicate_sources)
        .map(|_| chain.sentence(length(&mut rng), &mut rng))
        .collect();
    let mut pool = Vec::with_capacity(config.pool_size);
    for _ in 0..config.pool_size {
        let u = rng.next_f64();
        if u < config.duplicate_fraction {
            let k = rng.below(duplicates.len() as u64) as usize;
            pool.push(pair(&duplicates[k], &source_vocab, &target_vocab));
        } else if u < config.duplicate_fraction + config.noise_fraction {
            let n = length(&mut rng);
            let ids: Vec<usize> = (0..n)
                .map(|_| rng.below(noise_vocab.len() as u64) as usize)
                .collect();
            pool.push(pair(&ids, &noise_vocab, &noise_targets));
        } else {
            let ids = chain.sentence(length(&mut rng), &mut rng);
            pool.push(pair(&ids, &source_vocab, &target_vocab));
        }
    }
    let test = (0..config.test_size)
        .map(|_| {
            let ids = chain.sentence(length(&mut rng), &mut rng);
            pair(&ids, &source_vocab, &target_vocab)
        })
        .collect();
    Ok(SyntheticTask {
        pool: ParallelCorpus::new(pool)?,
        test: ParallelCorpus::new(test)?,
        lexicon: source_vocab.into_iter().zip(target_vocab).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            pool_size: 600,
            test_size: 60,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn pseudo_words_are_distinct() {
        let words: HashSet<String> = (0..20_000).map(|i| pseudo_word(i, "")).collect();
        assert_eq!(words.len(), 20_000);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.pool, b.pool);
        assert_eq!(a.test, b.test);
        let c = generate(&SyntheticConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.pool, c.pool);
    }

    #[test]
    fn substitution_is_positional_and_consistent() {
        let task = generate(&small()).unwrap();
        let mut mapping: HashMap<&str, &str> = HashMap::new();
        for p in task.pool.pairs().iter().chain(task.test.pairs()) {
            assert_eq!(p.source.len(), p.target.len());
            assert!((4..=14).contains(&p.source.len()));
            for (s, t) in p.source.iter().zip(&p.target) {
                assert_eq!(*mapping.entry(s).or_insert(t), t.as_str());
            }
        }
    }

    #[test]
    fn pool_has_duplicates_and_repeated_bigrams() {
        let task = generate(&SyntheticConfig {
            duplicate_fraction: 0.3,
            ..small()
        })
        .unwrap();
        let distinct: HashSet<&Sentence> = task.pool.sources().collect();
        assert!(distinct.len() < task.pool.len());
        let mut bigrams: HashMap<&[String], usize> = HashMap::new();
        for s in task.pool.sources() {
            for g in s.windows(2) {
                *bigrams.entry(g).or_default() += 1;
            }
        }
        assert!(bigrams.values().any(|&c| c >= 20));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate(&SyntheticConfig {
            min_length: 0,
            ..small()
        })
        .is_err());
        assert!(generate(&SyntheticConfig {
            duplicate_fraction: 0.8,
            noise_fraction: 0.5,
            ..small()
        })
        .is_err());
    }
}
