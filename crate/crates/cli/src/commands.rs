use std::collections::HashSet;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use dpal_core::al_sim::{run_experiment, RunConfig};
use dpal_core::bpe::{
    apply_bpe, compute_rare_words, dp_bpe_encode_mono, dp_bpe_encode_parallel, learn_bpe,
    MergeTable,
};
use dpal_core::corpus::{
    load_dictionary, load_mono, load_parallel, tokenize, write_sentences, MonoCorpus, PoolSplit,
    SeededRng, Sentence,
};
use dpal_core::metrics::{corpus_bleu, dict_f1};
use dpal_core::ngram_lm::{LmConfig, NGramModel};
use dpal_core::strategies::{
    format_significant, score_pool, select_top, CeDiffScorer, NgramOverlapScorer, RandomScorer,
    RttlScorer, ScoredPool, StrategyKind,
};
use dpal_core::synthetic::{generate, SyntheticConfig};
use dpal_core::translator_bridge::{serve, Bridge, Direction, ExternalProcess, LexicalMockBackend};
use dpal_core::Error;

use crate::{
    AlRunArgs, BpeApplyArgs, BpeLearnArgs, Cli, CliError, Command, EvalBleuArgs, EvalDictArgs,
    LmOptions, LmScoreArgs, LmTrainArgs, ScoreArgs, ServeMockArgs, Side, SplitHalvesArgs,
    SynthArgs,
};

type CliResult<T = ()> = Result<T, CliError>;

pub const LOCK_FILE: &str = "config.lock.json";
pub const LOCK_SCHEMA: u32 = 1;

pub fn dispatch(cli: &Cli) -> CliResult {
    if let Some(dir) = &cli.lock_dir {
        write_lock(dir, cli, None)?;
    }
    match &cli.command {
        Command::BpeLearn(a) => bpe_learn(a),
        Command::BpeApply(a) => bpe_apply(a),
        Command::LmTrain(a) => lm_train(a),
        Command::LmScore(a) => lm_score(a),
        Command::Score(a) => score(a),
        Command::AlRun(a) => al_run(cli, a),
        Command::EvalBleu(a) => eval_bleu(a),
        Command::EvalDict(a) => eval_dict(a),
        Command::SplitHalves(a) => split_halves(a),
        Command::Synth(a) => synth(a),
        Command::ServeMock(a) => serve_mock(a),
    }
}

fn write_lock(dir: &Path, cli: &Cli, resolved: Option<serde_json::Value>) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_owned(),
        source: e,
    })?;
    let mut lock = json!({
        "schema": LOCK_SCHEMA,
        "version": env!("CARGO_PKG_VERSION"),
        "jobs": rayon::current_num_threads(),
        "command": cli.command,
    });
    if let Some(resolved) = resolved {
        lock["resolved"] = resolved;
    }
    let path = dir.join(LOCK_FILE);
    let text = serde_json::to_string_pretty(&lock).expect("lock serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    Ok(())
}

fn read_input(path: Option<&Path>) -> CliResult<String> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| {
            Error::Io {
                path: p.to_owned(),
                source: e,
            }
            .into()
        }),
        None => {
            let mut text = String::new();
            io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<stdin>"),
                    source: e,
                })?;
            Ok(text)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_owned(),
            source: e,
        })?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })?;
        }
    }
    Ok(())
}

/// Tokenized lines, blank lines kept as empty sentences.
fn read_lines(path: &Path) -> CliResult<Vec<Sentence>> {
    Ok(read_input(Some(path))?.lines().map(tokenize).collect())
}

fn lm_config(options: &LmOptions) -> CliResult<LmConfig> {
    let config = match &options.lambda {
        Some(lambda) => LmConfig {
            order: options.order,
            alpha: options.alpha,
            lambda: lambda.clone(),
        },
        None => LmConfig::uniform(options.order, options.alpha),
    };
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn bpe_learn(args: &BpeLearnArgs) -> CliResult {
    let corpus = MonoCorpus::from_text(&read_input(args.input.as_deref())?);
    let table = learn_bpe(corpus.sentences(), args.merges)?;
    log::info!("learned {} merges", table.len());
    write_output(args.output.as_deref(), &table.to_text())
}

fn dictionary_side(path: &Path, side: Side) -> CliResult<HashSet<String>> {
    let dictionary = load_dictionary(path)?;
    Ok(match side {
        Side::Source => dictionary.source_words(),
        Side::Target => dictionary.target_words(),
    })
}

fn bpe_apply(args: &BpeApplyArgs) -> CliResult {
    let table = MergeTable::load(&args.codes)?;
    if args.parallel {
        return bpe_apply_parallel(args, &table);
    }
    let words = match (&args.dict, args.dp) {
        (Some(dict), true) => dictionary_side(dict, args.side)?,
        _ => HashSet::new(),
    };
    let rare = compute_rare_words(&words, &table);
    log::info!("{} rare dictionary words", rare.len());
    let mut out = String::new();
    for line in read_input(args.input.as_deref())?.lines() {
        let sentence = tokenize(line);
        let encodings = if args.dp {
            dp_bpe_encode_mono(&sentence, &table, &rare)
        } else {
            vec![apply_bpe(&sentence, &table)]
        };
        for encoded in encodings {
            out.push_str(&encoded.to_string());
            out.push('\n');
        }
    }
    write_output(args.output.as_deref(), &out)
}

fn bpe_apply_parallel(args: &BpeApplyArgs, table_src: &MergeTable) -> CliResult {
    let required = |p: &Option<PathBuf>, flag: &str| {
        p.clone()
            .ok_or_else(|| CliError::Usage(format!("--parallel needs {flag}")))
    };
    let table_tgt = MergeTable::load(required(&args.target_codes, "--target-codes")?)?;
    let pairs = load_parallel(
        required(&args.input, "--input")?,
        required(&args.target_input, "--target-input")?,
    )?;
    let (words_src, words_tgt) = match (&args.dict, args.dp) {
        (Some(dict), true) => (
            dictionary_side(dict, Side::Source)?,
            dictionary_side(dict, Side::Target)?,
        ),
        _ => (HashSet::new(), HashSet::new()),
    };
    let rare_src = compute_rare_words(&words_src, table_src);
    let rare_tgt = compute_rare_words(&words_tgt, &table_tgt);
    let (mut src_out, mut tgt_out) = (String::new(), String::new());
    for pair in pairs.pairs() {
        let encodings = if args.dp {
            dp_bpe_encode_parallel(pair, table_src, &table_tgt, &rare_src, &rare_tgt)
        } else {
            vec![(
                apply_bpe(&pair.source, table_src),
                apply_bpe(&pair.target, &table_tgt),
            )]
        };
        for (s, t) in encodings {
            src_out.push_str(&format!("{s}\n"));
            tgt_out.push_str(&format!("{t}\n"));
        }
    }
    write_output(args.output.as_deref(), &src_out)?;
    write_output(args.target_output.as_deref(), &tgt_out)
}

fn lm_train(args: &LmTrainArgs) -> CliResult {
    let config = lm_config(&args.lm)?;
    let corpus = MonoCorpus::from_text(&read_input(args.input.as_deref())?);
    let model = NGramModel::train(corpus.sentences(), config)?;
    log::info!(
        "trained order-{} model, |V| = {}",
        model.order(),
        model.vocab_size()
    );
    model.save(&args.output)?;
    Ok(())
}

fn lm_score(args: &LmScoreArgs) -> CliResult {
    let model = NGramModel::load(&args.model)?;
    let text = read_input(args.input.as_deref())?;
    let mut out = String::new();
    let (mut nll, mut tokens) = (0.0, 0usize);
    for line in text.lines() {
        let sentence = tokenize(line);
        if sentence.is_empty() {
            out.push_str("NA\n");
            continue;
        }
        let (n, t) = model.neg_log_likelihood(&sentence);
        nll += n;
        tokens += t;
        out.push_str(&format!("{}\n", model.cross_entropy(&sentence)?.value()));
    }
    if tokens > 0 {
        log::info!(
            "perplexity {} over {tokens} tokens",
            (nll / tokens as f64).exp()
        );
    }
    write_output(None, &out)
}

fn score_bridge(args: &ScoreArgs) -> CliResult<Bridge> {
    if let Some(v) = args.uniform_vocab {
        return Ok(Bridge::new(
            Arc::new(
                LexicalMockBackend::uniform(v, Direction::Fwd)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            ),
            Arc::new(
                LexicalMockBackend::uniform(v, Direction::Rev)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            ),
        ));
    }
    if let Some(command) = &args.backend {
        return Ok(Bridge::external(ExternalProcess::spawn(
            command,
            &args.backend_args,
        )?));
    }
    match (&args.labeled, &args.labeled_target) {
        (Some(src), Some(tgt)) => Ok(Bridge::train_mock(&load_parallel(src, tgt)?)?),
        _ => Err(CliError::Usage(
            "rttl needs --uniform-vocab, --backend, or --labeled with --labeled-target".into(),
        )),
    }
}

fn score(args: &ScoreArgs) -> CliResult {
    let pool = load_mono(&args.pool)?;
    let labeled: Vec<Sentence> = match &args.labeled {
        Some(p) => load_mono(p)?.into_sentences(),
        None => Vec::new(),
    };
    let entries: Vec<_> = pool.iter().collect();
    let name = args.strategy.name();
    let scored: ScoredPool = match args.strategy {
        StrategyKind::Random => {
            let scorer = RandomScorer {
                seed: SeededRng::derive_seed(args.seed, args.round as u64),
            };
            score_pool(name, args.round, &entries, &scorer)?
        }
        StrategyKind::NgramOverlap => {
            let scorer = NgramOverlapScorer::new(&labeled, args.n_max, args.normalize)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            score_pool(name, args.round, &entries, &scorer)?
        }
        StrategyKind::Rttl => {
            let bridge = score_bridge(args)?;
            score_pool(name, args.round, &entries, &RttlScorer { bridge: &bridge })?
        }
        StrategyKind::CeDiff => {
            if args.labeled.is_none() {
                return Err(CliError::Usage("ce-diff needs --labeled".into()));
            }
            let config = lm_config(&args.lm)?;
            let scorer = if entries.len() < 2 {
                CeDiffScorer::diversity_only(&labeled, &config)?
            } else {
                let split = PoolSplit::of_ids(pool.ids(), args.seed)?;
                CeDiffScorer::prepare(&entries, &labeled, &split, &config)?
            };
            let scored = score_pool(name, args.round, &entries, &scorer)?;
            log::info!(
                "ce-diff: {} density evaluations, {} on a sentence's own half",
                scorer.audit().density_evaluations(),
                scorer.audit().own_half()
            );
            scored
        }
    };
    let text = match args.top {
        Some(0) => return Err(CliError::Usage("--top must be at least 1".into())),
        Some(b) => {
            let selection = select_top(&scored, b)?;
            selection
                .selected
                .iter()
                .map(|(id, s)| {
                    format!(
                        "{id}\t{}\t{name}\t{}\n",
                        format_significant(*s, 9),
                        args.round
                    )
                })
                .collect()
        }
        None => scored.to_tsv(),
    };
    write_output(args.output.as_deref(), &text)
}

fn al_run(cli: &Cli, args: &AlRunArgs) -> CliResult {
    let mut config = RunConfig::load(&args.config)?;
    config.strategy_options.accumulate_scores |= args.accumulate_scores;
    config.strategy_options.resplit_each_round |= args.resplit_each_round;
    let resolved = serde_json::to_value(&config).expect("config serializes");
    write_lock(&config.output_dir, cli, Some(resolved))?;
    let reports = run_experiment(&config)?;
    for report in &reports {
        if let (Some(last), Some(metrics)) = (report.rounds.last(), report.final_metrics()) {
            log::info!(
                "{}: {} labelled, BLEU {:.2}, test n-gram coverage {}",
                report.strategy,
                last.labeled_size,
                metrics.bleu,
                metrics.test_ngram_coverage
            );
        }
    }
    Ok(())
}

fn eval_bleu(args: &EvalBleuArgs) -> CliResult {
    let report = corpus_bleu(&read_lines(&args.hyp)?, &read_lines(&args.reference)?)?;
    eprintln!("{report}");
    write_output(
        None,
        &(serde_json::to_string(&report).expect("report serializes") + "\n"),
    )
}

fn eval_dict(args: &EvalDictArgs) -> CliResult {
    let words = dictionary_side(&args.dict, args.side)?;
    let report = dict_f1(
        &read_lines(&args.hyp)?,
        &read_lines(&args.reference)?,
        &words,
    )?;
    eprintln!("{report}");
    write_output(
        None,
        &(serde_json::to_string(&report).expect("report serializes") + "\n"),
    )
}

fn split_halves(args: &SplitHalvesArgs) -> CliResult {
    let pool = load_mono(&args.input)?;
    let split = PoolSplit::of_ids(pool.ids(), args.seed)?;
    write_output(
        None,
        &(serde_json::to_string(&split).expect("split serializes") + "\n"),
    )
}

/// Dictionary entries start after this many of the most frequent words.
const DICTIONARY_SKIP: usize = 200;

fn synth(args: &SynthArgs) -> CliResult {
    let config = SyntheticConfig {
        pool_size: args.pool_size,
        test_size: args.test_size,
        duplicate_fraction: args.duplicate_fraction,
        noise_fraction: args.noise_fraction,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let task = generate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = &args.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    task.pool
        .write(dir.join("pool.src"), dir.join("pool.tgt"))?;
    write_sentences(&dir.join("test.src"), task.test.sources())?;
    write_sentences(&dir.join("test.ref"), task.test.targets())?;
    let dictionary: String = task
        .lexicon
        .iter()
        .skip(DICTIONARY_SKIP)
        .map(|(s, t)| format!("{s}\t{t}\n"))
        .collect();
    write_output(Some(&dir.join("dictionary.tsv")), &dictionary)?;
    let run = json!({
        "pool_path": "pool.src",
        "oracle_path": "pool.tgt",
        "test_src": "test.src",
        "test_ref": "test.ref",
        "dict_path": "dictionary.tsv",
        "budget": 1000,
        "batch_size": 200,
        "strategy": ["random", "ngram-overlap", "rttl", "ce-diff"],
        "seed": args.seed,
        "output_dir": "runs",
    });
    write_output(
        Some(&dir.join("run.json")),
        &(serde_json::to_string_pretty(&run).expect("json") + "\n"),
    )
}

fn serve_mock(args: &ServeMockArgs) -> CliResult {
    let bridge = match (&args.source, &args.target, args.uniform_vocab) {
        (Some(src), Some(tgt), _) => Bridge::train_mock(&load_parallel(src, tgt)?)?,
        (_, _, Some(v)) => Bridge::new(
            Arc::new(
                LexicalMockBackend::uniform(v, Direction::Fwd)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            ),
            Arc::new(
                LexicalMockBackend::uniform(v, Direction::Rev)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            ),
        ),
        _ => {
            return Err(CliError::Usage(
                "serve-mock needs --source/--target or --uniform-vocab".into(),
            ))
        }
    };
    serve(&bridge, io::stdin().lock(), io::stdout().lock()).map_err(|e| Error::Io {
        path: PathBuf::from("<stdio>"),
        source: e,
    })?;
    Ok(())
}
