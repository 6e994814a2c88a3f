//! Corpus data model and ingestion.
//!
//! Input text is assumed to be tokenized upstream; the only tokenization
//! performed here is splitting on whitespace. Monolingual files are
//! forgiving (blank lines are skipped and counted), parallel files are strict
//! because alignment is positional.
//!
//! All randomness in the toolkit comes from [`SeededRng`], a SplitMix64
//! generator (Steele, Lea and Flood 2014): state advances by
//! `0x9E3779B97F4A7C15` and each output is the state passed through the
//! `(30, 0xBF58476D1CE4E5B9, 27, 0x94D049BB133111EB, 31)` finalizer. The seed
//! is used directly as the initial state.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default seed used whenever a caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_220_527;

/// Index of a sentence in its owning pool, assigned in file order from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentenceId(pub usize);

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub type Sentence = Vec<String>;

pub fn tokenize(line: &str) -> Sentence {
    line.split_whitespace().map(str::to_owned).collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Ordered, non-empty sentences of one language.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MonoCorpus {
    sentences: Vec<Sentence>,
    blank_lines_skipped: usize,
}

impl MonoCorpus {
    /// Builds a corpus from already tokenized sentences, dropping empty ones.
    pub fn new(sentences: Vec<Sentence>) -> Self {
        let before = sentences.len();
        let sentences: Vec<Sentence> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        let blank_lines_skipped = before - sentences.len();
        MonoCorpus {
            sentences,
            blank_lines_skipped,
        }
    }

    pub fn from_text(text: &str) -> Self {
        MonoCorpus::new(text.lines().map(tokenize).collect())
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn get(&self, id: SentenceId) -> Option<&Sentence> {
        self.sentences.get(id.0)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn blank_lines_skipped(&self) -> usize {
        self.blank_lines_skipped
    }

    pub fn ids(&self) -> impl Iterator<Item = SentenceId> {
        (0..self.sentences.len()).map(SentenceId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SentenceId, &Sentence)> {
        self.sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (SentenceId(i), s))
    }

    pub fn into_sentences(self) -> Vec<Sentence> {
        self.sentences
    }
}

/// Loads a monolingual corpus, one whitespace-tokenized sentence per line.
pub fn load_mono(path: impl AsRef<Path>) -> Result<MonoCorpus> {
    let path = path.as_ref();
    let corpus = MonoCorpus::from_text(&read_text(path)?);
    if corpus.is_empty() {
        return Err(Error::NoUsableLines {
            path: path.to_owned(),
        });
    }
    if corpus.blank_lines_skipped > 0 {
        log::warn!(
            "{}: skipped {} blank line(s)",
            path.display(),
            corpus.blank_lines_skipped
        );
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: Sentence,
    pub target: Sentence,
}

/// Aligned source/target sentence pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    /// Builds a corpus from pairs; every pair must have two non-empty sides.
    pub fn new(pairs: Vec<SentencePair>) -> Result<Self> {
        for (i, pair) in pairs.iter().enumerate() {
            if pair.source.is_empty() {
                return Err(Error::EmptySide {
                    line: i + 1,
                    side: "source",
                });
            }
            if pair.target.is_empty() {
                return Err(Error::EmptySide {
                    line: i + 1,
                    side: "target",
                });
            }
        }
        Ok(ParallelCorpus { pairs })
    }

    pub fn from_texts(source: &str, target: &str) -> Result<Self> {
        let src: Vec<&str> = source.lines().collect();
        let tgt: Vec<&str> = target.lines().collect();
        if src.len() != tgt.len() {
            return Err(Error::LineCountMismatch {
                source_lines: src.len(),
                target_lines: tgt.len(),
            });
        }
        ParallelCorpus::new(
            src.into_iter()
                .zip(tgt)
                .map(|(s, t)| SentencePair {
                    source: tokenize(s),
                    target: tokenize(t),
                })
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, pair: SentencePair) -> Result<()> {
        if pair.source.is_empty() || pair.target.is_empty() {
            return Err(Error::EmptySide {
                line: self.pairs.len() + 1,
                side: if pair.source.is_empty() {
                    "source"
                } else {
                    "target"
                },
            });
        }
        self.pairs.push(pair);
        Ok(())
    }

    pub fn sources(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|p| &p.source)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|p| &p.target)
    }

    /// Source side as a monolingual corpus.
    pub fn source_corpus(&self) -> MonoCorpus {
        MonoCorpus::new(self.sources().cloned().collect())
    }

    /// Writes both sides, one space-joined sentence per line with `\n` endings.
    pub fn write(
        &self,
        source_path: impl AsRef<Path>,
        target_path: impl AsRef<Path>,
    ) -> Result<()> {
        write_sentences(source_path.as_ref(), self.sources())?;
        write_sentences(target_path.as_ref(), self.targets())
    }
}

pub fn load_parallel(
    source_path: impl AsRef<Path>,
    target_path: impl AsRef<Path>,
) -> Result<ParallelCorpus> {
    let source = read_text(source_path.as_ref())?;
    let target = read_text(target_path.as_ref())?;
    ParallelCorpus::from_texts(&source, &target)
}

pub fn write_sentences<'a>(
    path: &Path,
    sentences: impl IntoIterator<Item = &'a Sentence>,
) -> Result<()> {
    let mut out = Vec::new();
    for sentence in sentences {
        out.extend_from_slice(sentence.join(" ").as_bytes());
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Single-word bilingual dictionary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    entries: Vec<(String, String)>,
    multiword_dropped: usize,
    duplicates_dropped: usize,
}

impl Dictionary {
    /// Parses `source<TAB>target` lines. Blank lines and lines starting with
    /// `#` are ignored; entries with a multi-word side are dropped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dict = Dictionary::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let columns: Vec<&str> = line.split('\t').collect();
            if columns.len() != 2 || columns.iter().any(|c| c.trim().is_empty()) {
                return Err(Error::MalformedDictionaryLine {
                    line: i + 1,
                    columns: columns.len(),
                });
            }
            let (source, target) = (columns[0].trim(), columns[1].trim());
            if source.contains(char::is_whitespace) || target.contains(char::is_whitespace) {
                dict.multiword_dropped += 1;
                continue;
            }
            if seen.insert((source.to_owned(), target.to_owned())) {
                dict.entries.push((source.to_owned(), target.to_owned()));
            } else {
                dict.duplicates_dropped += 1;
            }
        }
        Ok(dict)
    }

    pub fn from_entries<S: Into<String>>(entries: impl IntoIterator<Item = (S, S)>) -> Self {
        let mut seen = HashSet::new();
        let mut dict = Dictionary::default();
        for (s, t) in entries {
            let (s, t) = (s.into(), t.into());
            if s.contains(char::is_whitespace) || t.contains(char::is_whitespace) {
                dict.multiword_dropped += 1;
            } else if seen.insert((s.clone(), t.clone())) {
                dict.entries.push((s, t));
            } else {
                dict.duplicates_dropped += 1;
            }
        }
        dict
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn multiword_dropped(&self) -> usize {
        self.multiword_dropped
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn source_words(&self) -> HashSet<String> {
        self.entries.iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn target_words(&self) -> HashSet<String> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let dict = Dictionary::parse(&read_text(path)?)?;
    if dict.multiword_dropped > 0 {
        log::info!(
            "{}: dropped {} multi-word entr{}",
            path.display(),
            dict.multiword_dropped,
            if dict.multiword_dropped == 1 {
                "y"
            } else {
                "ies"
            }
        );
    }
    Ok(dict)
}

/// Seeded SplitMix64 stream with the sampling helpers the toolkit needs.
#[derive(Debug, Clone)]
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(SplitMix64::seed_from_u64(seed))
    }

    /// Seed for an independent sub-stream, e.g. one per AL round.
    pub fn derive_seed(seed: u64, stream: u64) -> u64 {
        SeededRng::new(seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)).next_u64()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`: the top 53 bits scaled by `2^-53`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by rejection: draws below `2^64 mod n` are
    /// discarded, the rest are reduced modulo `n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    /// Durstenfeld shuffle: for `i` from `len-1` down to 1 swap `i` with `below(i+1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Half {
    First,
    Second,
}

impl Half {
    pub fn other(self) -> Half {
        match self {
            Half::First => Half::Second,
            Half::Second => Half::First,
        }
    }
}

/// Random partition of a pool into two halves, the first taking the extra
/// sentence when the pool size is odd.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSplit {
    half1: Vec<SentenceId>,
    half2: Vec<SentenceId>,
    seed: u64,
}

impl PoolSplit {
    /// Shuffles `ids` (taken in ascending order) with `seed` and cuts the
    /// result after `ceil(n/2)` elements.
    pub fn of_ids(ids: impl IntoIterator<Item = SentenceId>, seed: u64) -> Result<Self> {
        let mut ids: Vec<SentenceId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 2 {
            return Err(Error::PoolTooSmall(ids.len()));
        }
        SeededRng::new(seed).shuffle(&mut ids);
        let cut = ids.len().div_ceil(2);
        let mut half2 = ids.split_off(cut);
        let mut half1 = ids;
        half1.sort_unstable();
        half2.sort_unstable();
        Ok(PoolSplit { half1, half2, seed })
    }

    pub fn half1(&self) -> &[SentenceId] {
        &self.half1
    }

    pub fn half2(&self) -> &[SentenceId] {
        &self.half2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn half_of(&self, id: SentenceId) -> Option<Half> {
        if self.half1.binary_search(&id).is_ok() {
            Some(Half::First)
        } else if self.half2.binary_search(&id).is_ok() {
            Some(Half::Second)
        } else {
            None
        }
    }

    pub fn half(&self, half: Half) -> &[SentenceId] {
        match half {
            Half::First => &self.half1,
            Half::Second => &self.half2,
        }
    }

    pub fn len(&self) -> usize {
        self.half1.len() + self.half2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits a whole pool (ids `0..len`) into two halves.
pub fn split_halves(pool: &MonoCorpus, seed: u64) -> Result<PoolSplit> {
    PoolSplit::of_ids(pool.ids(), seed)
}
