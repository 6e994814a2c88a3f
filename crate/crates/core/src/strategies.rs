//! Selection strategies and top-B selection.
//!
//! Every strategy is split into a preparation phase (train models, build
//! n-gram sets) and a pure per-sentence [`SentenceScorer`]; pools are scored
//! in parallel on the current rayon pool. Higher scores mean more valuable
//! sentences.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Half, MonoCorpus, PoolSplit, SeededRng, Sentence, SentenceId};
use crate::error::{Error, Result};
use crate::ngram_lm::{LmConfig, NGramModel};
use crate::translator_bridge::{Bridge, Direction};

/// A pool sentence borrowed from its owning corpus.
pub type PoolEntry<'a> = (SentenceId, &'a Sentence);

pub fn pool_entries(corpus: &MonoCorpus) -> Vec<PoolEntry<'_>> {
    corpus.iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Random,
    NgramOverlap,
    Rttl,
    CeDiff,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Random,
        StrategyKind::NgramOverlap,
        StrategyKind::Rttl,
        StrategyKind::CeDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::NgramOverlap => "ngram-overlap",
            StrategyKind::Rttl => "rttl",
            StrategyKind::CeDiff => "ce-diff",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown strategy `{s}` (random|ngram-overlap|rttl|ce-diff)"
                ))
            })
    }
}

/// Per-strategy knobs; each strategy reads only its own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyOptions {
    /// Longest n-gram for `ngram-overlap`.
    pub n_max: usize,
    /// Divide `ngram-overlap` counts by the sentence's n-gram total.
    pub normalize: bool,
    /// Language models used by `ce-diff`.
    pub lm: LmConfig,
    /// Draw a fresh `ce-diff` split every round instead of once per run.
    pub resplit_each_round: bool,
    /// Sum scores over rounds instead of rescoring from scratch.
    pub accumulate_scores: bool,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        StrategyOptions {
            n_max: 4,
            normalize: false,
            lm: LmConfig::default(),
            resplit_each_round: false,
            accumulate_scores: false,
        }
    }
}

/// Importance score per pool sentence, ordered by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPool {
    pub strategy: String,
    pub round: usize,
    scores: Vec<(SentenceId, f64)>,
}

impl ScoredPool {
    pub fn new(
        strategy: impl Into<String>,
        round: usize,
        mut scores: Vec<(SentenceId, f64)>,
    ) -> Result<Self> {
        if let Some(&(id, score)) = scores.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::NonFiniteScore { id, score });
        }
        scores.sort_unstable_by_key(|&(id, _)| id);
        if let Some(w) = scores.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(format!(
                "sentence {} scored twice",
                w[0].0
            )));
        }
        Ok(ScoredPool {
            strategy: strategy.into(),
            round,
            scores,
        })
    }

    pub fn scores(&self) -> &[(SentenceId, f64)] {
        &self.scores
    }

    pub fn get(&self, id: SentenceId) -> Option<f64> {
        self.scores
            .binary_search_by_key(&id, |&(i, _)| i)
            .ok()
            .map(|i| self.scores[i].1)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `id<TAB>score<TAB>strategy<TAB>round` lines, scores to 9 significant digits.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, score) in &self.scores {
            out.push_str(&format!(
                "{id}\t{}\t{}\t{}\n",
                format_significant(*score, 9),
                self.strategy,
                self.round
            ));
        }
        out
    }
}

/// C-style `%.{digits}g` formatting.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let precision = digits.max(1) - 1;
    let sci = format!("{:.*e}", precision, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s.to_owned()
        }
    };
    if exp < -4 || exp >= digits as i32 {
        format!(
            "{}e{}{:02}",
            trim(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        let decimals = (precision as i32 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Highest score first, ties by ascending id.
    pub selected: Vec<(SentenceId, f64)>,
    pub batch_size: usize,
}

impl SelectionResult {
    pub fn ids(&self) -> Vec<SentenceId> {
        self.selected.iter().map(|&(id, _)| id).collect()
    }
}

fn rank_order(a: &(SentenceId, f64), b: &(SentenceId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `batch_size` best-scoring sentences (all of them if the pool is smaller).
pub fn select_top(scored: &ScoredPool, batch_size: usize) -> Result<SelectionResult> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    let mut items = scored.scores.clone();
    let take = batch_size.min(items.len());
    if take > 0 && take < items.len() {
        items.select_nth_unstable_by(take - 1, rank_order);
        items.truncate(take);
    }
    items.sort_unstable_by(rank_order);
    Ok(SelectionResult {
        selected: items,
        batch_size,
    })
}

pub trait SentenceScorer: Sync {
    fn score(&self, id: SentenceId, sentence: &[String]) -> Result<f64>;
}

/// Scores every pool entry in parallel. On failure the error reports how many
/// sentences were scored.
pub fn score_pool(
    strategy: &str,
    round: usize,
    pool: &[PoolEntry<'_>],
    scorer: &dyn SentenceScorer,
) -> Result<ScoredPool> {
    let results: Vec<Result<(SentenceId, f64)>> = pool
        .par_iter()
        .map(|&(id, sentence)| scorer.score(id, sentence).map(|s| (id, s)))
        .collect();
    let total = results.len();
    let scored = results.iter().filter(|r| r.is_ok()).count();
    let mut scores = Vec::with_capacity(total);
    for result in results {
        match result {
            Ok(item) => scores.push(item),
            Err(e) => {
                return Err(Error::ScoringAborted {
                    scored,
                    total,
                    source: Box::new(e),
                })
            }
        }
    }
    ScoredPool::new(strategy, round, scores)
}

/// Uniform `[0, 1)` score per sentence, derived from `(seed, id)` only.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub seed: u64,
}

impl SentenceScorer for RandomScorer {
    fn score(&self, id: SentenceId, _: &[String]) -> Result<f64> {
        Ok(SeededRng::new(SeededRng::derive_seed(self.seed, id.0 as u64)).next_f64())
    }
}

pub fn score_random(pool: &[PoolEntry<'_>], seed: u64, round: usize) -> Result<ScoredPool> {
    score_pool(
        StrategyKind::Random.name(),
        round,
        pool,
        &RandomScorer { seed },
    )
}

/// Counts n-gram occurrences (`n <= n_max`) unseen in the labelled source.
#[derive(Debug, Clone)]
pub struct NgramOverlapScorer {
    seen: HashSet<Vec<String>>,
    n_max: usize,
    normalize: bool,
}

impl NgramOverlapScorer {
    pub fn new<'a, I>(labeled_source: I, n_max: usize, normalize: bool) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        if n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for sentence in labeled_source {
            for n in 1..=n_max.min(sentence.len()) {
                for gram in sentence.windows(n) {
                    if !seen.contains(gram) {
                        seen.insert(gram.to_vec());
                    }
                }
            }
        }
        Ok(NgramOverlapScorer {
            seen,
            n_max,
            normalize,
        })
    }
}

impl SentenceScorer for NgramOverlapScorer {
    fn score(&self, _: SentenceId, sentence: &[String]) -> Result<f64> {
        let (mut unseen, mut total) = (0usize, 0usize);
        for n in 1..=self.n_max.min(sentence.len()) {
            for gram in sentence.windows(n) {
                total += 1;
                if !self.seen.contains(gram) {
                    unseen += 1;
                }
            }
        }
        Ok(if self.normalize {
            if total == 0 {
                0.0
            } else {
                unseen as f64 / total as f64
            }
        } else {
            unseen as f64
        })
    }
}

pub fn score_ngram_overlap<'a, I>(
    pool: &[PoolEntry<'_>],
    labeled_source: I,
    n_max: usize,
    normalize: bool,
    round: usize,
) -> Result<ScoredPool>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let scorer = NgramOverlapScorer::new(labeled_source, n_max, normalize)?;
    score_pool(StrategyKind::NgramOverlap.name(), round, pool, &scorer)
}

/// Round-trip translation likelihood: translate forward, then score the
/// reconstruction of the source with the reverse model. The score is the
/// negated mean token log-probability, so low confidence scores high.
pub struct RttlScorer<'b> {
    pub bridge: &'b Bridge,
}

impl SentenceScorer for RttlScorer<'_> {
    fn score(&self, _: SentenceId, sentence: &[String]) -> Result<f64> {
        if sentence.is_empty() {
            return Err(Error::EmptySentence);
        }
        let hypothesis = self.bridge.translate(Direction::Fwd, sentence)?;
        let logprobs = self
            .bridge
            .token_logprobs(Direction::Rev, &hypothesis, sentence)?;
        Ok(-shifted_mean(&logprobs))
    }
}

/// Mean taken around the first value, so equal values average to exactly
/// that value whatever their number.
fn shifted_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

pub fn score_rttl(pool: &[PoolEntry<'_>], bridge: &Bridge, round: usize) -> Result<ScoredPool> {
    if !bridge.supports_scoring_round_trip() {
        return Err(Error::StrategyUnavailable(
            "rttl needs forward translation and reverse scoring".into(),
        ));
    }
    score_pool(
        StrategyKind::Rttl.name(),
        round,
        pool,
        &RttlScorer { bridge },
    )
}

/// Evaluation counters for the cross-entropy-difference scorer.
#[derive(Debug, Default)]
pub struct CeDiffAudit {
    pub labeled_evaluations: AtomicU64,
    pub half_model_evaluations: [AtomicU64; 2],
    /// Evaluations of a sentence under the model trained on its own half.
    pub own_half_evaluations: AtomicU64,
}

impl CeDiffAudit {
    pub fn own_half(&self) -> u64 {
        self.own_half_evaluations.load(Ordering::Relaxed)
    }

    pub fn density_evaluations(&self) -> u64 {
        self.half_model_evaluations
            .iter()
            .map(|c| c.load(Ordering::Relaxed))
            .sum()
    }
}

struct HalfModel {
    model: NGramModel,
    trained_on: HashSet<SentenceId>,
}

/// `psi(s) = H(M_L, s) - H(M_other, s)`, where `M_L` is trained on the
/// labelled source and `M_other` on the pool half that does not contain `s`.
pub struct CeDiffScorer {
    labeled: NGramModel,
    halves: Option<[HalfModel; 2]>,
    split: Option<PoolSplit>,
    audit: CeDiffAudit,
}

fn half_index(half: Half) -> usize {
    match half {
        Half::First => 0,
        Half::Second => 1,
    }
}

impl CeDiffScorer {
    /// Trains the three models. Every pool id must belong to `split`; only
    /// the pool members of each half are used for training.
    pub fn prepare<'a, I>(
        pool: &[PoolEntry<'_>],
        labeled_source: I,
        split: &PoolSplit,
        config: &LmConfig,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let labeled_source: Vec<&Sentence> = labeled_source.into_iter().collect();
        if labeled_source.is_empty() {
            return Err(Error::StrategyUnavailable(
                "ce-diff needs labelled data; bootstrap the first batch randomly".into(),
            ));
        }
        let labeled = NGramModel::train(labeled_source, config.clone())?;
        let mut members: [Vec<PoolEntry<'_>>; 2] = [Vec::new(), Vec::new()];
        for &(id, sentence) in pool {
            let half = split.half_of(id).ok_or_else(|| {
                Error::InvalidArgument(format!("sentence {id} is not covered by the split"))
            })?;
            members[half_index(half)].push((id, sentence));
        }
        if members.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument(
                "both split halves need at least one pool sentence".into(),
            ));
        }
        let train_half = |entries: &[PoolEntry<'_>]| -> Result<HalfModel> {
            Ok(HalfModel {
                model: NGramModel::train(entries.iter().map(|&(_, s)| s), config.clone())?,
                trained_on: entries.iter().map(|&(id, _)| id).collect(),
            })
        };
        let halves = [train_half(&members[0])?, train_half(&members[1])?];
        Ok(CeDiffScorer {
            labeled,
            halves: Some(halves),
            split: Some(split.clone()),
            audit: CeDiffAudit::default(),
        })
    }

    /// Diversity term only, for a pool too small to split.
    pub fn diversity_only<'a, I>(labeled_source: I, config: &LmConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let labeled_source: Vec<&Sentence> = labeled_source.into_iter().collect();
        if labeled_source.is_empty() {
            return Err(Error::StrategyUnavailable(
                "ce-diff needs labelled data".into(),
            ));
        }
        Ok(CeDiffScorer {
            labeled: NGramModel::train(labeled_source, config.clone())?,
            halves: None,
            split: None,
            audit: CeDiffAudit::default(),
        })
    }

    pub fn audit(&self) -> &CeDiffAudit {
        &self.audit
    }

    pub fn labeled_model(&self) -> &NGramModel {
        &self.labeled
    }

    pub fn half_model(&self, half: Half) -> Option<&NGramModel> {
        self.halves.as_ref().map(|h| &h[half_index(half)].model)
    }
}

impl SentenceScorer for CeDiffScorer {
    fn score(&self, id: SentenceId, sentence: &[String]) -> Result<f64> {
        let diversity = self.labeled.cross_entropy(sentence)?.value();
        self.audit
            .labeled_evaluations
            .fetch_add(1, Ordering::Relaxed);
        let (Some(halves), Some(split)) = (&self.halves, &self.split) else {
            return Ok(diversity);
        };
        let own = split.half_of(id).ok_or_else(|| {
            Error::InvalidArgument(format!("sentence {id} is not covered by the split"))
        })?;
        let other = half_index(own.other());
        let density_model = &halves[other];
        if density_model.trained_on.contains(&id) {
            self.audit
                .own_half_evaluations
                .fetch_add(1, Ordering::Relaxed);
        }
        self.audit.half_model_evaluations[other].fetch_add(1, Ordering::Relaxed);
        Ok(diversity - density_model.model.cross_entropy(sentence)?.value())
    }
}

pub fn score_ce_diff<'a, I>(
    pool: &[PoolEntry<'_>],
    labeled_source: I,
    split: &PoolSplit,
    config: &LmConfig,
    round: usize,
) -> Result<ScoredPool>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let scorer = CeDiffScorer::prepare(pool, labeled_source, split, config)?;
    score_pool(StrategyKind::CeDiff.name(), round, pool, &scorer)
}
