//! Budgeted pool-based active learning with a simulated annotator.
//!
//! Round 0 labels a random batch. Each later round scores the remaining pool
//! with the chosen strategy, labels the top `min(B, budget left, |pool|)`
//! sentences by looking up their references, and retrains the proxy
//! translation model on everything labelled so far.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_dictionary, load_parallel, MonoCorpus, ParallelCorpus, PoolSplit, SeededRng, Sentence,
    SentenceId, SentencePair, DEFAULT_SEED,
};
use crate::error::{Error, Result};
use crate::metrics::{corpus_bleu, dict_f1};
use crate::strategies::{
    score_pool, select_top, CeDiffScorer, NgramOverlapScorer, PoolEntry, RandomScorer, RttlScorer,
    ScoredPool, StrategyKind, StrategyOptions,
};
use crate::translator_bridge::{Bridge, Direction, ExternalProcess};

/// Stream for the fixed cross-entropy-difference split.
const SPLIT_STREAM: u64 = u64::MAX;

/// Longest n-gram counted for test-set coverage.
pub const COVERAGE_ORDER: usize = 4;

/// Held-out references standing in for human translators.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    references: HashMap<SentenceId, Sentence>,
}

impl Oracle {
    pub fn new(references: HashMap<SentenceId, Sentence>) -> Self {
        Oracle { references }
    }

    /// Splits aligned pairs into a pool (ids are pair indices) and its oracle.
    pub fn from_parallel(pairs: &ParallelCorpus) -> (MonoCorpus, Oracle) {
        let pool = MonoCorpus::new(pairs.sources().cloned().collect());
        let references = pairs
            .targets()
            .cloned()
            .enumerate()
            .map(|(i, t)| (SentenceId(i), t))
            .collect();
        (pool, Oracle { references })
    }

    pub fn reference(&self, id: SentenceId) -> Option<&Sentence> {
        self.references.get(&id)
    }

    pub fn check_coverage(&self, ids: impl IntoIterator<Item = SentenceId>) -> Result<()> {
        let missing: Vec<SentenceId> = ids
            .into_iter()
            .filter(|id| !self.references.contains_key(id))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::OracleCoverage { missing })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub id: SentenceId,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub bleu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dict_f1: Option<f64>,
    /// Distinct test-source n-grams (`n <= 4`) present in the labelled source.
    pub test_ngram_coverage: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub strategy: String,
    pub selected: Vec<Selected>,
    pub labeled_size: usize,
    pub budget_remaining: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own_half_evaluations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricSnapshot>,
    /// Kept out of `rounds.jsonl` so that runs stay byte-identical.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl PartialEq for RoundLog {
    /// Ignores `elapsed`.
    fn eq(&self, other: &Self) -> bool {
        self.round == other.round
            && self.strategy == other.strategy
            && self.selected == other.selected
            && self.labeled_size == other.labeled_size
            && self.budget_remaining == other.budget_remaining
            && self.own_half_evaluations == other.own_half_evaluations
            && self.metrics == other.metrics
    }
}

impl RoundLog {
    pub fn selected_ids(&self) -> impl Iterator<Item = SentenceId> + '_ {
        self.selected.iter().map(|s| s.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default)]
    pub options: StrategyOptions,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        StrategySpec {
            kind,
            options: StrategyOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ALState<'a> {
    corpus: &'a MonoCorpus,
    oracle: &'a Oracle,
    labeled: ParallelCorpus,
    labeled_ids: Vec<SentenceId>,
    pool: BTreeSet<SentenceId>,
    initial_budget: usize,
    budget_remaining: usize,
    round: usize,
    batch_size: usize,
    seed: u64,
    split: Option<PoolSplit>,
    accumulated: HashMap<SentenceId, f64>,
    history: Vec<RoundLog>,
}

impl<'a> ALState<'a> {
    pub fn labeled(&self) -> &ParallelCorpus {
        &self.labeled
    }

    /// Labelled ids in annotation order.
    pub fn labeled_ids(&self) -> &[SentenceId] {
        &self.labeled_ids
    }

    pub fn pool(&self) -> &BTreeSet<SentenceId> {
        &self.pool
    }

    pub fn initial_budget(&self) -> usize {
        self.initial_budget
    }

    pub fn budget_remaining(&self) -> usize {
        self.budget_remaining
    }

    /// Index of the next round.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn history(&self) -> &[RoundLog] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.budget_remaining == 0 || self.pool.is_empty()
    }

    fn pool_entries(&self) -> Vec<PoolEntry<'a>> {
        let corpus = self.corpus;
        self.pool
            .iter()
            .map(|&id| (id, corpus.get(id).expect("pool ids index the corpus")))
            .collect()
    }

    fn annotate(
        &mut self,
        selected: &[(SentenceId, f64)],
        strategy: &str,
        started: Instant,
    ) -> Result<()> {
        for &(id, _) in selected {
            if !self.pool.remove(&id) {
                return Err(Error::InvalidArgument(format!(
                    "sentence {id} is not in the pool"
                )));
            }
            let reference = self
                .oracle
                .reference(id)
                .ok_or(Error::OracleCoverage { missing: vec![id] })?;
            let source = self.corpus.get(id).expect("pool ids index the corpus");
            self.labeled.push(SentencePair {
                source: source.clone(),
                target: reference.clone(),
            })?;
            self.labeled_ids.push(id);
            self.accumulated.remove(&id);
        }
        self.budget_remaining -= selected.len();
        self.history.push(RoundLog {
            round: self.round,
            strategy: strategy.to_owned(),
            selected: selected
                .iter()
                .map(|&(id, psi)| Selected { id, psi })
                .collect(),
            labeled_size: self.labeled.len(),
            budget_remaining: self.budget_remaining,
            own_half_evaluations: None,
            metrics: None,
            elapsed: started.elapsed(),
        });
        self.round += 1;
        Ok(())
    }
}

/// Labels a random first batch of `min(batch_size, |pool|)` sentences.
pub fn init_simulation<'a>(
    pool: &'a MonoCorpus,
    oracle: &'a Oracle,
    budget: usize,
    batch_size: usize,
    seed: u64,
) -> Result<ALState<'a>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    if budget < batch_size {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} is smaller than the batch size {batch_size}"
        )));
    }
    if pool.is_empty() {
        return Err(Error::EmptyCorpus("the unlabelled pool is empty"));
    }
    oracle.check_coverage(pool.ids())?;
    let started = Instant::now();
    let split = PoolSplit::of_ids(pool.ids(), SeededRng::derive_seed(seed, SPLIT_STREAM)).ok();
    let mut state = ALState {
        corpus: pool,
        oracle,
        labeled: ParallelCorpus::default(),
        labeled_ids: Vec::new(),
        pool: pool.ids().collect(),
        initial_budget: budget,
        budget_remaining: budget,
        round: 0,
        batch_size,
        seed,
        split,
        accumulated: HashMap::new(),
        history: Vec::new(),
    };
    let entries = state.pool_entries();
    let scored = score_pool(
        StrategyKind::Random.name(),
        0,
        &entries,
        &RandomScorer {
            seed: SeededRng::derive_seed(seed, 0),
        },
    )?;
    let selection = select_top(&scored, batch_size)?;
    state.annotate(&selection.selected, StrategyKind::Random.name(), started)?;
    Ok(state)
}

fn score_round(
    state: &ALState<'_>,
    spec: &StrategySpec,
    bridge: Option<&Bridge>,
) -> Result<(ScoredPool, Option<u64>)> {
    let round = state.round;
    let entries = state.pool_entries();
    let labeled = || state.labeled.sources();
    let options = &spec.options;
    let name = spec.kind.name();
    match spec.kind {
        StrategyKind::Random => {
            let scorer = RandomScorer {
                seed: SeededRng::derive_seed(state.seed, round as u64),
            };
            Ok((score_pool(name, round, &entries, &scorer)?, None))
        }
        StrategyKind::NgramOverlap => {
            let scorer = NgramOverlapScorer::new(labeled(), options.n_max, options.normalize)?;
            Ok((score_pool(name, round, &entries, &scorer)?, None))
        }
        StrategyKind::Rttl => {
            let bridge = bridge.ok_or_else(|| {
                Error::StrategyUnavailable("rttl needs a translation backend".into())
            })?;
            if !bridge.supports_scoring_round_trip() {
                return Err(Error::StrategyUnavailable(
                    "rttl needs forward translation and reverse scoring".into(),
                ));
            }
            Ok((
                score_pool(name, round, &entries, &RttlScorer { bridge })?,
                None,
            ))
        }
        StrategyKind::CeDiff => {
            let scorer = if entries.len() < 2 {
                CeDiffScorer::diversity_only(labeled(), &options.lm)?
            } else {
                let split = ce_diff_split(state, options.resplit_each_round)?;
                CeDiffScorer::prepare(&entries, labeled(), &split, &options.lm)?
            };
            let scored = score_pool(name, round, &entries, &scorer)?;
            Ok((scored, Some(scorer.audit().own_half())))
        }
    }
}

/// The run's fixed split while both halves keep pool members, otherwise (or
/// on request) a fresh split of the current pool.
fn ce_diff_split(state: &ALState<'_>, resplit: bool) -> Result<PoolSplit> {
    let split_seed = SeededRng::derive_seed(state.seed, SPLIT_STREAM);
    if !resplit {
        if let Some(split) = &state.split {
            let first = split.half1().iter().any(|id| state.pool.contains(id));
            let second = split.half2().iter().any(|id| state.pool.contains(id));
            if first && second {
                return Ok(split.clone());
            }
        }
    }
    PoolSplit::of_ids(
        state.pool.iter().copied(),
        SeededRng::derive_seed(split_seed, state.round as u64),
    )
}

pub type RetrainHook<'h> = &'h mut dyn FnMut(&ParallelCorpus) -> Result<()>;

/// Runs one selection round and calls `retrain_hook` with the grown labelled set.
pub fn run_round(
    state: &mut ALState<'_>,
    spec: &StrategySpec,
    bridge: Option<&Bridge>,
    retrain_hook: Option<RetrainHook<'_>>,
) -> Result<()> {
    if state.budget_remaining == 0 {
        return Err(Error::InvalidArgument("the budget is exhausted".into()));
    }
    if state.pool.is_empty() {
        return Err(Error::InvalidArgument("the pool is empty".into()));
    }
    let started = Instant::now();
    let (mut scored, own_half) = score_round(state, spec, bridge)?;
    if spec.options.accumulate_scores {
        for (id, psi) in scored.scores() {
            *state.accumulated.entry(*id).or_insert(0.0) += psi;
        }
        let totals = scored
            .scores()
            .iter()
            .map(|(id, _)| (*id, state.accumulated[id]))
            .collect();
        scored = ScoredPool::new(scored.strategy.clone(), scored.round, totals)?;
    }
    let take = state.batch_size.min(state.budget_remaining);
    let selection = select_top(&scored, take)?;
    state.annotate(&selection.selected, spec.kind.name(), started)?;
    if let Some(log) = state.history.last_mut() {
        log.own_half_evaluations = own_half;
    }
    if let Some(hook) = retrain_hook {
        hook(&state.labeled)?;
    }
    Ok(())
}

/// Held-out test data for per-round evaluation of the proxy model.
#[derive(Debug, Clone)]
pub struct Evaluation {
    test: ParallelCorpus,
    dictionary_words: Option<HashSet<String>>,
    test_ngrams: HashSet<Vec<String>>,
}

fn ngram_set<'s>(sentences: impl IntoIterator<Item = &'s Sentence>) -> HashSet<&'s [String]> {
    let mut set = HashSet::new();
    for s in sentences {
        for n in 1..=COVERAGE_ORDER.min(s.len()) {
            set.extend(s.windows(n));
        }
    }
    set
}

impl Evaluation {
    pub fn new(test: ParallelCorpus, dictionary_words: Option<HashSet<String>>) -> Result<Self> {
        if test.is_empty() {
            return Err(Error::EmptyCorpus("the test set is empty"));
        }
        let test_ngrams = ngram_set(test.sources())
            .into_iter()
            .map(<[String]>::to_vec)
            .collect();
        Ok(Evaluation {
            test,
            dictionary_words,
            test_ngrams,
        })
    }

    pub fn test(&self) -> &ParallelCorpus {
        &self.test
    }

    /// Distinct test-source n-grams that also occur in `labeled`.
    pub fn coverage(&self, labeled: &ParallelCorpus) -> usize {
        ngram_set(labeled.sources())
            .into_iter()
            .filter(|g| self.test_ngrams.contains(*g))
            .count()
    }

    pub fn evaluate(&self, proxy: &Bridge, labeled: &ParallelCorpus) -> Result<MetricSnapshot> {
        let sources: Vec<&Sentence> = self.test.sources().collect();
        let hypotheses = sources
            .par_iter()
            .map(|s| proxy.translate(Direction::Fwd, s))
            .collect::<Result<Vec<Sentence>>>()?;
        let references: Vec<Sentence> = self.test.targets().cloned().collect();
        let bleu = corpus_bleu(&hypotheses, &references)?.bleu;
        let dict_f1 = match &self.dictionary_words {
            Some(words) => Some(dict_f1(&hypotheses, &references, words)?.f1),
            None => None,
        };
        Ok(MetricSnapshot {
            bleu,
            dict_f1,
            test_ngram_coverage: self.coverage(labeled),
        })
    }
}

/// Where RTTL gets its translation model.
#[derive(Clone, Default)]
pub enum ScoringBackend {
    /// The proxy mock, retrained on the labelled set every round.
    #[default]
    Proxy,
    External(Bridge),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub strategy: StrategyKind,
    pub rounds: Vec<RoundLog>,
}

fn format_metric(value: Option<f64>) -> String {
    value.map_or_else(|| "NA".to_owned(), |v| v.to_string())
}

impl SimulationReport {
    pub fn rounds_jsonl(&self) -> String {
        self.rounds
            .iter()
            .map(|r| serde_json::to_string(r).expect("round logs serialize") + "\n")
            .collect()
    }

    /// `round, labeled_size, bleu, dict_f1`, one row per round.
    pub fn report_tsv(&self) -> String {
        let mut out = String::from("round\tlabeled_size\tbleu\tdict_f1\n");
        for r in &self.rounds {
            let metrics = r.metrics.as_ref();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.round,
                r.labeled_size,
                format_metric(metrics.map(|m| m.bleu)),
                format_metric(metrics.and_then(|m| m.dict_f1))
            ));
        }
        out
    }

    pub fn selection_tsv(round: &RoundLog) -> String {
        round
            .selected
            .iter()
            .map(|s| format!("{}\t{}\n", s.id, s.psi))
            .collect()
    }

    pub fn timings_tsv(&self) -> String {
        let mut out = String::from("round\tseconds\n");
        for r in &self.rounds {
            out.push_str(&format!("{}\t{:.6}\n", r.round, r.elapsed.as_secs_f64()));
        }
        out
    }

    pub fn final_metrics(&self) -> Option<&MetricSnapshot> {
        self.rounds.last().and_then(|r| r.metrics.as_ref())
    }

    /// Writes `rounds.jsonl`, `report.tsv`, `selection_round<k>.tsv` and `timings.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: String, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write("rounds.jsonl".into(), self.rounds_jsonl())?;
        write("report.tsv".into(), self.report_tsv())?;
        write("timings.tsv".into(), self.timings_tsv())?;
        for r in &self.rounds {
            write(
                format!("selection_round{}.tsv", r.round),
                Self::selection_tsv(r),
            )?;
        }
        Ok(())
    }
}

/// Runs rounds until the budget or the pool is exhausted, evaluating the
/// proxy model after every round when `evaluation` is given.
pub fn run_simulation(
    mut state: ALState<'_>,
    spec: &StrategySpec,
    backend: &ScoringBackend,
    evaluation: Option<&Evaluation>,
) -> Result<SimulationReport> {
    let mut proxy = Bridge::train_mock(&state.labeled)?;
    if let (Some(eval), Some(last)) = (evaluation, state.history.last_mut()) {
        if last.metrics.is_none() {
            last.metrics = Some(eval.evaluate(&proxy, &state.labeled)?);
        }
    }
    while !state.is_finished() {
        let scoring_bridge = match backend {
            ScoringBackend::Proxy => proxy.clone(),
            ScoringBackend::External(bridge) => bridge.clone(),
        };
        let mut retrain = |labeled: &ParallelCorpus| -> Result<()> {
            proxy = Bridge::train_mock(labeled)?;
            Ok(())
        };
        run_round(&mut state, spec, Some(&scoring_bridge), Some(&mut retrain))?;
        log::info!(
            "round {} ({}): labelled {}, budget left {}",
            state.round - 1,
            spec.kind,
            state.labeled.len(),
            state.budget_remaining
        );
        if let Some(eval) = evaluation {
            let snapshot = eval.evaluate(&proxy, &state.labeled)?;
            state.history.last_mut().expect("round logged").metrics = Some(snapshot);
        }
    }
    Ok(SimulationReport {
        strategy: spec.kind,
        rounds: state.history,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategyChoice {
    One(StrategyKind),
    Many(Vec<StrategyKind>),
}

impl StrategyChoice {
    pub fn kinds(&self) -> Vec<StrategyKind> {
        match self {
            StrategyChoice::One(k) => vec![*k],
            StrategyChoice::Many(ks) => ks.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// `al-run` configuration. Relative paths are resolved against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pool_path: PathBuf,
    pub oracle_path: PathBuf,
    pub test_src: PathBuf,
    pub test_ref: PathBuf,
    pub budget: usize,
    pub batch_size: usize,
    pub strategy: StrategyChoice,
    #[serde(default)]
    pub strategy_options: StrategyOptions,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dict_path: Option<PathBuf>,
    #[serde(default)]
    pub backend: Option<BackendConfig>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "run configuration",
            detail: e.to_string(),
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        for p in [
            &mut config.pool_path,
            &mut config.oracle_path,
            &mut config.test_src,
            &mut config.test_ref,
            &mut config.output_dir,
        ] {
            resolve(p);
        }
        if let Some(p) = config.dict_path.as_mut() {
            resolve(p);
        }
        if config.strategy.kinds().is_empty() {
            return Err(Error::InvalidArgument("no strategy given".into()));
        }
        config.strategy_options.lm.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Runs every configured strategy on the same pool and writes the outputs.
/// Several strategies get one subdirectory each plus `comparison.tsv`.
pub fn run_experiment(config: &RunConfig) -> Result<Vec<SimulationReport>> {
    let pairs = load_parallel(&config.pool_path, &config.oracle_path)?;
    let test = load_parallel(&config.test_src, &config.test_ref)?;
    let dictionary_words = match &config.dict_path {
        Some(p) => Some(load_dictionary(p)?.target_words()),
        None => None,
    };
    let evaluation = Evaluation::new(test, dictionary_words)?;
    let (pool, oracle) = Oracle::from_parallel(&pairs);
    let backend = match &config.backend {
        Some(b) => ScoringBackend::External(Bridge::external(ExternalProcess::spawn(
            &b.command, &b.args,
        )?)),
        None => ScoringBackend::Proxy,
    };
    let kinds = config.strategy.kinds();
    let mut reports = Vec::with_capacity(kinds.len());
    for kind in &kinds {
        let spec = StrategySpec {
            kind: *kind,
            options: config.strategy_options.clone(),
        };
        let state = init_simulation(
            &pool,
            &oracle,
            config.budget,
            config.batch_size,
            config.seed,
        )?;
        let report = run_simulation(state, &spec, &backend, Some(&evaluation))?;
        let dir = if kinds.len() == 1 {
            config.output_dir.clone()
        } else {
            config.output_dir.join(kind.name())
        };
        report.write(&dir)?;
        reports.push(report);
    }
    if kinds.len() > 1 {
        let path = config.output_dir.join("comparison.tsv");
        fs::write(&path, comparison_tsv(&reports)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(reports)
}

/// Labelled size by strategy, BLEU of the proxy model in each cell.
pub fn comparison_tsv(reports: &[SimulationReport]) -> String {
    let mut out = String::from("labeled_size");
    for r in reports {
        out.push('\t');
        out.push_str(r.strategy.name());
    }
    out.push('\n');
    let rows = reports.iter().map(|r| r.rounds.len()).max().unwrap_or(0);
    for i in 0..rows {
        let size = reports
            .iter()
            .find_map(|r| r.rounds.get(i))
            .map_or(0, |r| r.labeled_size);
        out.push_str(&size.to_string());
        for r in reports {
            out.push('\t');
            out.push_str(&format_metric(
                r.rounds
                    .get(i)
                    .and_then(|l| l.metrics.as_ref())
                    .map(|m| m.bleu),
            ));
        }
        out.push('\n');
    }
    out
}
