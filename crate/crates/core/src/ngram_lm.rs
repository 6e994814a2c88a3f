//! Interpolated additive-smoothing n-gram language models.
//!
//! For a model of order `n`, the probability of `w` after history `h` is
//!
//! ```text
//! p(w | h) = sum_{k=1..n} lambda_k * (c(h_k, w) + alpha) / (c(h_k) + alpha * |V|)
//! ```
//!
//! where `h_k` is the last `k-1` tokens of `h` and `V` is the training
//! vocabulary plus the reserved `<unk>` and `</s>` symbols. Sentences are
//! padded with `n-1` `<s>` symbols on the left and one `</s>` on the right;
//! `<s>` is context only and never predicted. Unseen tokens are mapped to
//! `<unk>` both as targets and in the history.
//!
//! Cross-entropy is the mean negative natural log-probability per predicted
//! token, `</s>` included.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const MODEL_MAGIC: &str = "NGLM1";

const UNK_ID: u32 = 0;
const EOS_ID: u32 = 1;
const BOS_ID: u32 = 2;
const FIRST_WORD_ID: u32 = 3;

const LAMBDA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub order: usize,
    pub alpha: f64,
    /// Interpolation weights, unigram first.
    pub lambda: Vec<f64>,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig::uniform(3, 0.1)
    }
}

impl LmConfig {
    pub fn uniform(order: usize, alpha: f64) -> Self {
        LmConfig {
            order,
            alpha,
            lambda: vec![1.0 / order.max(1) as f64; order],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("order must be at least 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.lambda.len() != self.order {
            return Err(Error::InvalidLambda(format!(
                "expected {} weights, got {}",
                self.order,
                self.lambda.len()
            )));
        }
        if self.lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidLambda(format!(
                "weights must be non-negative: {:?}",
                self.lambda
            )));
        }
        let sum: f64 = self.lambda.iter().sum();
        if (sum - 1.0).abs() > LAMBDA_TOLERANCE {
            return Err(Error::InvalidLambda(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Mean negative log-likelihood per token, in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CrossEntropy(f64);

impl CrossEntropy {
    pub fn value(self) -> f64 {
        self.0
    }
}

type Counts = HashMap<Box<[u32]>, u64>;

#[derive(Debug, Clone)]
pub struct NGramModel {
    config: LmConfig,
    vocab: HashMap<String, u32>,
    words: Vec<String>,
    // ngrams[k-1]: counts of k-grams (history..., word)
    ngrams: Vec<Counts>,
    // histories[k-1]: counts of the (k-1)-token histories of those k-grams
    histories: Vec<Counts>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: LmConfig,
    words: Vec<String>,
    ngrams: Vec<Vec<(Vec<u32>, u64)>>,
}

fn count_ngrams(order: usize, corpus: &[Vec<u32>]) -> Vec<Counts> {
    let mut ngrams = vec![Counts::new(); order];
    for ids in corpus {
        let mut padded = vec![BOS_ID; order - 1];
        padded.extend_from_slice(ids);
        padded.push(EOS_ID);
        for i in order - 1..padded.len() {
            for k in 1..=order {
                *ngrams[k - 1]
                    .entry(padded[i + 1 - k..=i].into())
                    .or_default() += 1;
            }
        }
    }
    ngrams
}

fn merge_counts(mut a: Vec<Counts>, b: Vec<Counts>) -> Vec<Counts> {
    for (into, from) in a.iter_mut().zip(b) {
        for (key, count) in from {
            *into.entry(key).or_default() += count;
        }
    }
    a
}

impl NGramModel {
    /// Trains a model. Counting is sharded across the current rayon pool; the
    /// merged counts are identical to a sequential pass.
    pub fn train<'a, I>(corpus: I, config: LmConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        config.validate()?;
        let corpus: Vec<&Sentence> = corpus.into_iter().collect();
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptyCorpus(
                "cannot train a language model on an empty corpus",
            ));
        }
        let mut types: Vec<&str> = corpus
            .iter()
            .flat_map(|s| s.iter().map(String::as_str))
            .collect();
        types.sort_unstable();
        types.dedup();
        let words: Vec<String> = types.into_iter().map(str::to_owned).collect();
        let vocab: HashMap<String, u32> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), FIRST_WORD_ID + i as u32))
            .collect();

        let encoded: Vec<Vec<u32>> = corpus
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.iter().map(|w| vocab[w.as_str()]).collect())
            .collect();
        let order = config.order;
        let ngrams = encoded
            .par_chunks(2048)
            .map(|chunk| count_ngrams(order, chunk))
            .reduce(|| vec![Counts::new(); order], merge_counts);
        Ok(NGramModel::from_counts(config, words, vocab, ngrams))
    }

    fn from_counts(
        config: LmConfig,
        words: Vec<String>,
        vocab: HashMap<String, u32>,
        ngrams: Vec<Counts>,
    ) -> Self {
        let histories = ngrams
            .iter()
            .map(|counts| {
                let mut h = Counts::new();
                for (key, &c) in counts {
                    *h.entry(key[..key.len() - 1].into()).or_default() += c;
                }
                h
            })
            .collect();
        NGramModel {
            config,
            vocab,
            words,
            ngrams,
            histories,
        }
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    /// `|V|`: training types plus `<unk>` and `</s>`.
    pub fn vocab_size(&self) -> usize {
        self.words.len() + 2
    }

    /// Every predictable symbol: training types, `<unk>` and `</s>`.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str).chain([UNK, EOS])
    }

    fn id(&self, token: &str) -> u32 {
        match token {
            BOS => BOS_ID,
            EOS => EOS_ID,
            _ => self.vocab.get(token).copied().unwrap_or(UNK_ID),
        }
    }

    /// Raw count of an n-gram given as surface tokens (`<s>`/`</s>` allowed).
    pub fn count(&self, ngram: &[&str]) -> u64 {
        if ngram.is_empty() || ngram.len() > self.order() {
            return 0;
        }
        let key: Vec<u32> = ngram.iter().map(|t| self.id(t)).collect();
        self.ngrams[key.len() - 1]
            .get(key.as_slice())
            .copied()
            .unwrap_or(0)
    }

    /// Largest history count of any order.
    pub fn max_history_count(&self) -> u64 {
        self.histories
            .iter()
            .flat_map(|h| h.values())
            .copied()
            .max()
            .unwrap_or(0)
    }

    // `window` holds the (order-1)-token history followed by the predicted id.
    fn prob_window(&self, window: &[u32]) -> f64 {
        let n = self.order();
        debug_assert_eq!(window.len(), n);
        let alpha = self.config.alpha;
        let denom_extra = alpha * self.vocab_size() as f64;
        let mut p = 0.0;
        for k in 1..=n {
            let lambda = self.config.lambda[k - 1];
            if lambda == 0.0 {
                continue;
            }
            let gram = &window[n - k..];
            let c = self.ngrams[k - 1].get(gram).copied().unwrap_or(0) as f64;
            let h = self.histories[k - 1]
                .get(&gram[..k - 1])
                .copied()
                .unwrap_or(0) as f64;
            p += lambda * (c + alpha) / (h + denom_extra);
        }
        p
    }

    /// `p(word | history)`; only the last `order-1` history tokens matter and
    /// short histories are padded with `<s>`.
    pub fn prob(&self, history: &[&str], word: &str) -> f64 {
        let n = self.order();
        let mut window = vec![BOS_ID; n];
        let tail = &history[history.len().saturating_sub(n - 1)..];
        for (slot, token) in window[n - 1 - tail.len()..n - 1].iter_mut().zip(tail) {
            *slot = self.id(token);
        }
        window[n - 1] = self.id(word);
        self.prob_window(&window)
    }

    /// Sum of `-ln p` over the sentence and its `</s>`, with the number of
    /// predicted tokens.
    pub fn neg_log_likelihood(&self, sentence: &[String]) -> (f64, usize) {
        let n = self.order();
        let mut padded = vec![BOS_ID; n - 1];
        padded.extend(sentence.iter().map(|w| self.id(w)));
        padded.push(EOS_ID);
        let nll = padded.windows(n).map(|w| -self.prob_window(w).ln()).sum();
        (nll, sentence.len() + 1)
    }

    pub fn cross_entropy(&self, sentence: &[String]) -> Result<CrossEntropy> {
        if sentence.is_empty() {
            return Err(Error::EmptySentence);
        }
        let (nll, tokens) = self.neg_log_likelihood(sentence);
        Ok(CrossEntropy(nll / tokens as f64))
    }

    /// `exp` of the token-weighted mean cross-entropy over a corpus.
    pub fn perplexity<'a, I>(&self, corpus: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let (mut nll, mut tokens) = (0.0, 0usize);
        for sentence in corpus {
            if sentence.is_empty() {
                return Err(Error::EmptySentence);
            }
            let (s_nll, s_tokens) = self.neg_log_likelihood(sentence);
            nll += s_nll;
            tokens += s_tokens;
        }
        if tokens == 0 {
            return Err(Error::EmptyCorpus("perplexity needs at least one sentence"));
        }
        Ok((nll / tokens as f64).exp())
    }

    pub fn to_text(&self) -> String {
        let ngrams = self
            .ngrams
            .iter()
            .map(|counts| {
                let mut entries: Vec<(Vec<u32>, u64)> =
                    counts.iter().map(|(k, &c)| (k.to_vec(), c)).collect();
                entries.sort_unstable();
                entries
            })
            .collect();
        let file = ModelFile {
            config: self.config.clone(),
            words: self.words.clone(),
            ngrams,
        };
        let body = serde_json::to_string(&file).expect("model serializes");
        format!("{MODEL_MAGIC}\n{body}\n")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "language model file",
            detail,
        };
        let body = text
            .strip_prefix(MODEL_MAGIC)
            .and_then(|rest| rest.strip_prefix('\n'))
            .ok_or_else(|| bad(format!("missing {MODEL_MAGIC} header")))?;
        let file: ModelFile =
            serde_json::from_str(body.trim_end()).map_err(|e| bad(e.to_string()))?;
        file.config.validate()?;
        if file.ngrams.len() != file.config.order {
            return Err(bad("count tables do not match the model order".into()));
        }
        let limit = FIRST_WORD_ID + file.words.len() as u32;
        let mut ngrams = Vec::with_capacity(file.ngrams.len());
        for (k, entries) in file.ngrams.into_iter().enumerate() {
            let mut counts = Counts::with_capacity(entries.len());
            for (key, c) in entries {
                if key.len() != k + 1 || key.iter().any(|&id| id >= limit) {
                    return Err(bad(format!("invalid {}-gram {key:?}", k + 1)));
                }
                counts.insert(key.into(), c);
            }
            ngrams.push(counts);
        }
        let vocab = file
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), FIRST_WORD_ID + i as u32))
            .collect();
        Ok(NGramModel::from_counts(
            file.config,
            file.words,
            vocab,
            ngrams,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        NGramModel::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn train_lm<'a, I>(corpus: I, config: LmConfig) -> Result<NGramModel>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    NGramModel::train(corpus, config)
}
