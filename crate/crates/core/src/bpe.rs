//! Byte-pair encoding and its dictionary-preserving variant.
//!
//! Words are split into characters and merged greedily by merge rank. Pieces
//! other than the last piece of a word carry the `@@` continuation marker, so
//! `training` may be encoded as `train@@ ing`.
//!
//! Dictionary-preserving encoding protects *rare words*: dictionary words that
//! the merge table would split into more than one piece. A sentence that
//! contains at least one rare word is emitted twice, first with the rare words
//! kept whole and then with the standard encoding.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::rc::Rc;

use crate::corpus::{Sentence, SentencePair};
use crate::error::{Error, Result};

pub const CONTINUATION: &str = "@@";
pub const MERGE_TABLE_HEADER: &str = "#version: dp-bpe 1";

/// Ordered merge rules; a rule's rank is its position.
#[derive(Debug, Clone, Default)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    symbols: HashMap<String, u32>,
    // (left, right) -> (rank, merged symbol)
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl PartialEq for MergeTable {
    fn eq(&self, other: &Self) -> bool {
        self.merges == other.merges
    }
}

impl Eq for MergeTable {}

impl MergeTable {
    pub fn new() -> Self {
        MergeTable::default()
    }

    pub fn from_merges<S: Into<String>>(merges: impl IntoIterator<Item = (S, S)>) -> Result<Self> {
        let mut table = MergeTable::new();
        for (left, right) in merges {
            table.push(left.into(), right.into())?;
        }
        Ok(table)
    }

    fn intern(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.symbols.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.insert(symbol.to_owned(), id);
        id
    }

    /// Appends a merge rule with the next rank.
    pub fn push(&mut self, left: String, right: String) -> Result<()> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::Format {
                what: "merge table",
                detail: "empty symbol".into(),
            });
        }
        if left.contains(char::is_whitespace) || right.contains(char::is_whitespace) {
            return Err(Error::Format {
                what: "merge table",
                detail: format!("symbol contains whitespace in ({left:?}, {right:?})"),
            });
        }
        let l = self.intern(&left);
        let r = self.intern(&right);
        if self.ranks.contains_key(&(l, r)) {
            return Err(Error::Format {
                what: "merge table",
                detail: format!("duplicate merge {left} {right}"),
            });
        }
        let merged = self.intern(&format!("{left}{right}"));
        self.ranks.insert((l, r), (self.merges.len(), merged));
        self.merges.push((left, right));
        Ok(())
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Table restricted to its first `n` merges.
    pub fn truncated(&self, n: usize) -> MergeTable {
        MergeTable::from_merges(self.merges.iter().take(n).cloned())
            .expect("prefix of a valid table is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(|l| l.trim_end_matches('\r')) {
            Some(MERGE_TABLE_HEADER) => {}
            other => {
                return Err(Error::Format {
                    what: "merge table",
                    detail: format!("expected header {MERGE_TABLE_HEADER:?}, found {other:?}"),
                })
            }
        }
        let mut table = MergeTable::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) => table.push(l.to_owned(), r.to_owned())?,
                _ => {
                    return Err(Error::Format {
                        what: "merge table",
                        detail: format!("line {}: expected `left right`", i + 2),
                    })
                }
            }
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 * self.merges.len() + 32);
        out.push_str(MERGE_TABLE_HEADER);
        out.push('\n');
        for (l, r) in &self.merges {
            out.push_str(l);
            out.push(' ');
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MergeTable::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Splits one word into subword pieces (without continuation markers).
    pub fn segment<'w>(&self, word: &'w str) -> Vec<&'w str> {
        // (symbol id if known to the table, byte start, byte end)
        let mut pieces: Vec<(Option<u32>, usize, usize)> = word
            .char_indices()
            .map(|(i, c)| {
                (
                    self.symbols.get(&word[i..i + c.len_utf8()]).copied(),
                    i,
                    i + c.len_utf8(),
                )
            })
            .collect();
        loop {
            let best = pieces
                .windows(2)
                .filter_map(|w| match (w[0].0, w[1].0) {
                    (Some(l), Some(r)) => self.ranks.get(&(l, r)).map(|&(rank, _)| (rank, l, r)),
                    _ => None,
                })
                .min();
            let Some((_, left, right)) = best else { break };
            let merged = self.ranks[&(left, right)].1;
            let mut out = Vec::with_capacity(pieces.len());
            let mut i = 0;
            while i < pieces.len() {
                if i + 1 < pieces.len()
                    && pieces[i].0 == Some(left)
                    && pieces[i + 1].0 == Some(right)
                {
                    out.push((Some(merged), pieces[i].1, pieces[i + 1].2));
                    i += 2;
                } else {
                    out.push(pieces[i]);
                    i += 1;
                }
            }
            pieces = out;
        }
        pieces
            .into_iter()
            .map(|(_, start, end)| &word[start..end])
            .collect()
    }
}

/// A sentence of subword pieces; non-final pieces of a word end in `@@`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EncodedSentence {
    pub tokens: Vec<String>,
}

impl EncodedSentence {
    pub fn parse(line: &str) -> Self {
        EncodedSentence {
            tokens: line.split_whitespace().map(str::to_owned).collect(),
        }
    }
}

impl fmt::Display for EncodedSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

fn push_word(out: &mut Vec<String>, word: &str, table: &MergeTable) {
    let pieces = table.segment(word);
    let last = pieces.len().saturating_sub(1);
    for (i, piece) in pieces.into_iter().enumerate() {
        if i < last {
            out.push(format!("{piece}{CONTINUATION}"));
        } else {
            out.push(piece.to_owned());
        }
    }
}

pub fn apply_bpe(sentence: &[String], table: &MergeTable) -> EncodedSentence {
    let mut tokens = Vec::with_capacity(sentence.len() * 2);
    for word in sentence {
        push_word(&mut tokens, word, table);
    }
    EncodedSentence { tokens }
}

/// Inverse of [`apply_bpe`]: glues each `@@`-terminated piece to its successor.
pub fn decode(encoded: &EncodedSentence) -> Result<Sentence> {
    let mut words = Vec::new();
    let mut pending = String::new();
    for token in &encoded.tokens {
        match token.strip_suffix(CONTINUATION) {
            Some(stem) => pending.push_str(stem),
            None => {
                pending.push_str(token);
                words.push(std::mem::take(&mut pending));
            }
        }
    }
    if encoded
        .tokens
        .last()
        .is_some_and(|t| t.ends_with(CONTINUATION))
    {
        return Err(Error::DanglingContinuation);
    }
    Ok(words)
}

/// Dictionary words that the table splits into more than one piece.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RareWordSet {
    words: HashSet<String>,
}

impl RareWordSet {
    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn any_in(&self, sentence: &[String]) -> bool {
        sentence.iter().any(|w| self.contains(w))
    }
}

pub fn compute_rare_words<I, S>(dictionary_side: I, table: &MergeTable) -> RareWordSet
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    RareWordSet {
        words: dictionary_side
            .into_iter()
            .filter(|w| table.segment(w.as_ref()).len() > 1)
            .map(|w| w.as_ref().to_owned())
            .collect(),
    }
}

fn encode_protected(
    sentence: &[String],
    table: &MergeTable,
    rare: &RareWordSet,
) -> EncodedSentence {
    let mut tokens = Vec::with_capacity(sentence.len() * 2);
    for word in sentence {
        if rare.contains(word) {
            tokens.push(word.clone());
        } else {
            push_word(&mut tokens, word, table);
        }
    }
    EncodedSentence { tokens }
}

/// One encoding when the sentence has no rare word, otherwise the protected
/// encoding followed by the standard one.
pub fn dp_bpe_encode_mono(
    sentence: &[String],
    table: &MergeTable,
    rare: &RareWordSet,
) -> Vec<EncodedSentence> {
    let standard = apply_bpe(sentence, table);
    if rare.any_in(sentence) {
        vec![encode_protected(sentence, table, rare), standard]
    } else {
        vec![standard]
    }
}

/// Pair version of [`dp_bpe_encode_mono`]. A pair yields two encoded pairs when
/// either side contains a rare word of that side's language.
pub fn dp_bpe_encode_parallel(
    pair: &SentencePair,
    table_src: &MergeTable,
    table_tgt: &MergeTable,
    rare_src: &RareWordSet,
    rare_tgt: &RareWordSet,
) -> Vec<(EncodedSentence, EncodedSentence)> {
    let src = apply_bpe(&pair.source, table_src);
    let tgt = apply_bpe(&pair.target, table_tgt);
    if !rare_src.any_in(&pair.source) && !rare_tgt.any_in(&pair.target) {
        return vec![(src, tgt)];
    }
    let protected = (
        encode_protected(&pair.source, table_src, rare_src),
        encode_protected(&pair.target, table_tgt, rare_tgt),
    );
    vec![protected, (src, tgt)]
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: Rc<str>,
    right: Rc<str>,
    pair: (u32, u32),
}

impl Ord for Candidate {
    // Max-heap order: higher count first, then lexicographically smaller pair.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Learns up to `num_merges` merges from word frequencies.
///
/// Each step merges the most frequent adjacent symbol pair (counted over word
/// types weighted by frequency, overlapping occurrences included). Equal
/// counts go to the lexicographically smallest `(left, right)`. Learning
/// stops early once no pair occurs at least twice.
pub fn learn_bpe<'a, I>(sentences: I, num_merges: usize) -> Result<MergeTable>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    if num_merges == 0 {
        return Err(Error::InvalidArgument(
            "num_merges must be at least 1".into(),
        ));
    }
    let mut word_freq: HashMap<&str, u64> = HashMap::new();
    for sentence in sentences {
        for word in sentence {
            *word_freq.entry(word.as_str()).or_default() += 1;
        }
    }
    if word_freq.is_empty() {
        return Err(Error::EmptyCorpus("cannot learn BPE from an empty corpus"));
    }

    let mut names: Vec<Rc<str>> = Vec::new();
    let mut ids: HashMap<Rc<str>, u32> = HashMap::new();
    let mut intern = |s: &str, names: &mut Vec<Rc<str>>| -> u32 {
        if let Some(&id) = ids.get(s) {
            return id;
        }
        let rc: Rc<str> = Rc::from(s);
        let id = names.len() as u32;
        names.push(rc.clone());
        ids.insert(rc, id);
        id
    };

    let mut types: Vec<(&str, u64)> = word_freq.into_iter().collect();
    types.sort_unstable();
    let mut words: Vec<Vec<u32>> = Vec::with_capacity(types.len());
    let freqs: Vec<u64> = types.iter().map(|&(_, f)| f).collect();
    for (word, _) in &types {
        let mut buf = [0u8; 4];
        let symbols = word
            .chars()
            .map(|c| intern(c.encode_utf8(&mut buf), &mut names))
            .collect();
        words.push(symbols);
    }

    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut occurs_in: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (idx, word) in words.iter().enumerate() {
        for w in word.windows(2) {
            *counts.entry((w[0], w[1])).or_default() += freqs[idx];
            occurs_in.entry((w[0], w[1])).or_default().insert(idx);
        }
    }
    let mut heap: BinaryHeap<Candidate> = counts
        .iter()
        .map(|(&pair, &count)| Candidate {
            count,
            left: names[pair.0 as usize].clone(),
            right: names[pair.1 as usize].clone(),
            pair,
        })
        .collect();

    let mut table = MergeTable::new();
    while table.len() < num_merges {
        let Some(best) = heap.pop() else { break };
        if counts.get(&best.pair).copied().unwrap_or(0) != best.count {
            continue; // stale
        }
        if best.count < 2 {
            break;
        }
        let (left, right) = best.pair;
        let merged = intern(&format!("{}{}", best.left, best.right), &mut names);
        table.push(best.left.to_string(), best.right.to_string())?;

        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        let affected: Vec<usize> = occurs_in
            .remove(&best.pair)
            .unwrap_or_default()
            .into_iter()
            .collect();
        for idx in affected {
            let word = &words[idx];
            if !word.windows(2).any(|w| w[0] == left && w[1] == right) {
                continue;
            }
            let freq = freqs[idx];
            for w in word.windows(2) {
                let pair = (w[0], w[1]);
                let c = counts.get_mut(&pair).expect("counted pair");
                *c -= freq;
                touched.insert(pair);
            }
            let mut next = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(word[i]);
                    i += 1;
                }
            }
            for w in next.windows(2) {
                let pair = (w[0], w[1]);
                *counts.entry(pair).or_default() += freq;
                occurs_in.entry(pair).or_default().insert(idx);
                touched.insert(pair);
            }
            words[idx] = next;
        }
        counts.remove(&best.pair);
        for pair in touched {
            match counts.get(&pair).copied() {
                Some(0) => {
                    counts.remove(&pair);
                }
                Some(count) => heap.push(Candidate {
                    count,
                    left: names[pair.0 as usize].clone(),
                    right: names[pair.1 as usize].clone(),
                    pair,
                }),
                None => {}
            }
        }
    }
    Ok(table)
}
