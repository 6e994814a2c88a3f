//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use dpal_core::al_sim::{init_simulation, run_round, ALState, Oracle, StrategySpec};
use dpal_core::corpus::{MonoCorpus, PoolSplit, SeededRng, Sentence, SentenceId};
use dpal_core::metrics::{corpus_bleu, dict_f1};
use dpal_core::ngram_lm::{train_lm, LmConfig};
use dpal_core::strategies::{
    pool_entries, score_ngram_overlap, score_pool, score_rttl, select_top, CeDiffScorer,
    ScoredPool, StrategyKind,
};
use dpal_core::synthetic::{generate, SyntheticConfig};
use dpal_core::translator_bridge::{Bridge, Direction, LexicalMockBackend};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!(
            "{what} took {:.2} s, limit {limit_s} s",
            elapsed.as_secs_f64()
        )
    })
}

fn words(n: usize, prefix: &str) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn random_sentence(rng: &mut SeededRng, vocab: &[String], min_len: u64, max_len: u64) -> Sentence {
    let len = min_len + rng.below(max_len - min_len + 1);
    (0..len)
        .map(|_| vocab[rng.below(vocab.len() as u64) as usize].clone())
        .collect()
}

// Interpolated additive-smoothing LM evaluated straight from string n-gram
// counts of the padded training sentences.
struct OracleLm {
    order: usize,
    alpha: f64,
    lambda: Vec<f64>,
    types: HashSet<String>,
    ngrams: HashMap<Vec<String>, f64>,
    histories: HashMap<Vec<String>, f64>,
}

impl OracleLm {
    fn train(corpus: &[Sentence], config: &LmConfig) -> Self {
        let n = config.order;
        let mut lm = OracleLm {
            order: n,
            alpha: config.alpha,
            lambda: config.lambda.clone(),
            types: HashSet::new(),
            ngrams: HashMap::new(),
            histories: HashMap::new(),
        };
        for s in corpus {
            lm.types.extend(s.iter().cloned());
            let padded = Self::pad(n, s.clone());
            for i in n - 1..padded.len() {
                for k in 1..=n {
                    let window = padded[i + 1 - k..=i].to_vec();
                    *lm.histories.entry(window[..k - 1].to_vec()).or_default() += 1.0;
                    *lm.ngrams.entry(window).or_default() += 1.0;
                }
            }
        }
        lm
    }

    fn pad(n: usize, s: Sentence) -> Sentence {
        let mut padded = vec!["<s>".to_string(); n - 1];
        padded.extend(s);
        padded.push("</s>".to_string());
        padded
    }

    fn cross_entropy(&self, s: &Sentence) -> f64 {
        let n = self.order;
        let v = (self.types.len() + 2) as f64;
        let mapped: Sentence = s
            .iter()
            .map(|w| {
                if self.types.contains(w) {
                    w.clone()
                } else {
                    "<unk>".to_string()
                }
            })
            .collect();
        let padded = Self::pad(n, mapped);
        let mut nll = 0.0;
        for i in n - 1..padded.len() {
            let mut p = 0.0;
            for k in 1..=n {
                let window = &padded[i + 1 - k..=i];
                let c = self.ngrams.get(window).copied().unwrap_or(0.0);
                let h = self.histories.get(&window[..k - 1]).copied().unwrap_or(0.0);
                p += self.lambda[k - 1] * (c + self.alpha) / (h + self.alpha * v);
            }
            nll -= p.ln();
        }
        nll / (s.len() + 1) as f64
    }
}

fn dpal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpal"))
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut codes = String::from("#version: dp-bpe 1\n");
    for word in [
        "Academic", "center", "will", "focus", "on", "kills", "train", "ing", "tom", "orrow",
    ] {
        let chars: Vec<char> = word.chars().collect();
        let mut acc = chars[0].to_string();
        for c in &chars[1..] {
            codes.push_str(&format!("{acc} {c}\n"));
            acc.push(*c);
        }
    }
    fs::write(dir.path().join("codes"), codes).map_err(|e| e.to_string())?;
    fs::write(
        dir.path().join("dict.tsv"),
        "tomorrow\tmorgen\ntraining\tausbildung\ncenter\tzentrum\n",
    )
    .map_err(|e| e.to_string())?;
    let started = Instant::now();
    let mut child = dpal()
        .arg("bpe-apply")
        .arg("--dp")
        .arg("--codes")
        .arg(dir.path().join("codes"))
        .arg("--dict")
        .arg(dir.path().join("dict.tsv"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"Academic Skills center will focus on training tomorrow\n")
        .map_err(|e| e.to_string())?;
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let expected = "Academic S@@ kills center will focus on training tomorrow\n\
                    Academic S@@ kills center will focus on train@@ ing tom@@ orrow\n";
    ensure(out.status.success(), || {
        format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    ensure(out.stdout == expected.as_bytes(), || {
        format!("got {:?}", String::from_utf8_lossy(&out.stdout))
    })?;
    within(elapsed, 1.0, "bpe-apply")?;
    Ok(format!(
        "two lines byte-exact in {:.3} s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let mut rng = SeededRng::new(2);
    let common = words(40, "w");
    let pool_only = words(30, "p");
    let mixed: Vec<String> = common.iter().chain(&pool_only).cloned().collect();
    let labeled: Vec<Sentence> = (0..50)
        .map(|_| random_sentence(&mut rng, &common, 1, 12))
        .collect();
    let pool = MonoCorpus::new(
        (0..200)
            .map(|_| random_sentence(&mut rng, &mixed, 1, 15))
            .collect(),
    );
    let config = LmConfig {
        order: 3,
        alpha: 0.1,
        lambda: vec![0.2, 0.3, 0.5],
    };
    let split = PoolSplit::of_ids(pool.ids(), 20_220_527).map_err(|e| e.to_string())?;

    let started = Instant::now();
    let entries = pool_entries(&pool);
    let scorer =
        CeDiffScorer::prepare(&entries, &labeled, &split, &config).map_err(|e| e.to_string())?;
    let scored = score_pool("ce-diff", 1, &entries, &scorer).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();

    let lm_labeled = OracleLm::train(&labeled, &config);
    let half_text = |ids: &[SentenceId]| -> Vec<Sentence> {
        ids.iter()
            .map(|id| pool.get(*id).unwrap().clone())
            .collect()
    };
    let lm_half1 = OracleLm::train(&half_text(split.half1()), &config);
    let lm_half2 = OracleLm::train(&half_text(split.half2()), &config);
    let mut worst: f64 = 0.0;
    for (id, s) in pool.iter() {
        let other = if split.half1().contains(&id) {
            &lm_half2
        } else {
            &lm_half1
        };
        let psi = lm_labeled.cross_entropy(s) - other.cross_entropy(s);
        let got = scored.get(id).ok_or_else(|| format!("{id:?} unscored"))?;
        worst = worst.max((got - psi).abs());
    }
    ensure(scored.len() == 200, || format!("{} scores", scored.len()))?;
    ensure(worst <= 1e-9, || format!("max |delta| = {worst:e}"))?;
    let own = scorer.audit().own_half();
    ensure(own == 0, || format!("{own} own-half evaluations"))?;
    ensure(scorer.audit().density_evaluations() == 200, || {
        format!(
            "{} density evaluations",
            scorer.audit().density_evaluations()
        )
    })?;
    within(elapsed, 10.0, "ce-diff scoring")?;
    Ok(format!(
        "max |delta| = {worst:.1e}, 0 own-half evaluations, {:.3} s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = SeededRng::new(3);
    let vocab = words(25, "t");
    let corpus: Vec<Sentence> = (0..20)
        .map(|_| random_sentence(&mut rng, &vocab, 1, 10))
        .collect();
    let unseen = words(10, "u");
    let mixed: Vec<String> = vocab.iter().chain(&unseen).cloned().collect();
    let mut probes: Vec<Sentence> = corpus.iter().take(10).cloned().collect();
    probes.extend((0..20).map(|_| random_sentence(&mut rng, &unseen, 1, 8)));
    probes.extend((0..70).map(|_| random_sentence(&mut rng, &mixed, 1, 12)));

    let mut worst: f64 = 0.0;
    for config in [
        LmConfig::default(),
        LmConfig {
            order: 4,
            alpha: 0.01,
            lambda: vec![0.1, 0.2, 0.3, 0.4],
        },
    ] {
        let model = train_lm(&corpus, config.clone()).map_err(|e| e.to_string())?;
        let oracle = OracleLm::train(&corpus, &config);
        for probe in &probes {
            let got = model
                .cross_entropy(probe)
                .map_err(|e| e.to_string())?
                .value();
            ensure(got.is_finite(), || {
                format!("non-finite entropy for {probe:?}")
            })?;
            worst = worst.max((got - oracle.cross_entropy(probe)).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max |delta| = {worst:e}"))?;
    Ok(format!(
        "{} probes x 2 configurations, max |delta| = {worst:.1e}",
        probes.len()
    ))
}

fn criterion_4() -> Outcome {
    let mut rng = SeededRng::new(4);
    let mut ties = 0usize;
    for trial in 0..1000 {
        let size = 1 + rng.below(1000) as usize;
        let mut ids: Vec<usize> = (0..size * 2).collect();
        rng.shuffle(&mut ids);
        let levels = 1 + rng.below(if trial % 2 == 0 { 5 } else { 1_000_000 });
        let scores: Vec<(SentenceId, f64)> = ids[..size]
            .iter()
            .map(|&i| (SentenceId(i), rng.below(levels) as f64 * 0.25 - 3.0))
            .collect();
        let distinct: HashSet<u64> = scores.iter().map(|(_, s)| s.to_bits()).collect();
        ties += usize::from(distinct.len() < size);
        let pool = ScoredPool::new("oracle", 0, scores.clone()).map_err(|e| e.to_string())?;
        let b = 1 + rng.below(size as u64 + 3) as usize;
        let mut sorted = scores;
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        sorted.truncate(b);
        let got = select_top(&pool, b).map_err(|e| e.to_string())?;
        ensure(got.selected == sorted, || {
            format!("trial {trial}: size {size}, B {b} differs")
        })?;
    }
    Ok(format!("1000 pools agree, {ties} with tied scores"))
}

fn ngrams(s: &[String], n: usize) -> Vec<&[String]> {
    if s.len() < n {
        Vec::new()
    } else {
        (0..=s.len() - n).map(|i| &s[i..i + n]).collect()
    }
}

fn oracle_bleu(hyps: &[Sentence], refs: &[Sentence]) -> f64 {
    let mut correct = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut sys_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        sys_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hg = ngrams(h, n);
            let rg = ngrams(r, n);
            totals[n - 1] += hg.len();
            let mut seen: Vec<&[String]> = Vec::new();
            for g in &hg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g);
                let in_h = hg.iter().filter(|x| *x == g).count();
                let in_r = rg.iter().filter(|x| *x == g).count();
                correct[n - 1] += in_h.min(in_r);
            }
        }
    }
    if correct.iter().all(|c| *c == 0) {
        return 0.0;
    }
    let mut precisions = [0.0f64; 4];
    let mut smooth = 1.0;
    for n in 0..4 {
        if totals[n] == 0 {
            break;
        }
        if correct[n] == 0 {
            smooth *= 2.0;
            precisions[n] = 100.0 / (smooth * totals[n] as f64);
        } else {
            precisions[n] = 100.0 * correct[n] as f64 / totals[n] as f64;
        }
    }
    let bp = if sys_len >= ref_len {
        1.0
    } else if sys_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / sys_len as f64).exp()
    };
    let log_sum: f64 = precisions
        .iter()
        .map(|p| if *p == 0.0 { -9_999_999_999.0 } else { p.ln() })
        .sum();
    bp * (log_sum / 4.0).exp()
}

fn criterion_5() -> Outcome {
    let mut rng = SeededRng::new(5);
    let vocab = words(6, "b");
    let identity: Vec<Sentence> = (0..30)
        .map(|_| random_sentence(&mut rng, &vocab, 4, 20))
        .collect();
    let report = corpus_bleu(&identity, &identity).map_err(|e| e.to_string())?;
    ensure(report.bleu == 100.0, || {
        format!("identity BLEU {}", report.bleu)
    })?;
    let mut worst: f64 = 0.0;
    let mut zero_matches = 0;
    for trial in 0..50 {
        let n = 1 + rng.below(5) as usize;
        let refs: Vec<Sentence> = (0..n)
            .map(|_| random_sentence(&mut rng, &vocab, 1, 12))
            .collect();
        let hyps: Vec<Sentence> = refs
            .iter()
            .map(|r| {
                let mut h: Sentence = r.iter().filter(|_| rng.below(5) != 0).cloned().collect();
                for _ in 0..rng.below(3) {
                    let at = rng.below(h.len() as u64 + 1) as usize;
                    h.insert(at, vocab[rng.below(6) as usize].clone());
                }
                h
            })
            .collect();
        let got = corpus_bleu(&hyps, &refs).map_err(|e| e.to_string())?;
        zero_matches += usize::from(got.matches.contains(&0));
        let expected = oracle_bleu(&hyps, &refs);
        worst = worst.max((got.bleu - expected).abs());
        ensure(worst <= 1e-6, || {
            format!("trial {trial}: {} vs oracle {expected}", got.bleu)
        })?;
    }
    let disjoint: Vec<Sentence> = identity
        .iter()
        .map(|s| s.iter().map(|w| format!("{w}x")).collect())
        .collect();
    let none = corpus_bleu(&disjoint, &identity).map_err(|e| e.to_string())?;
    ensure(
        none.bleu == 0.0 && oracle_bleu(&disjoint, &identity) == 0.0,
        || format!("no matches gives {}", none.bleu),
    )?;
    Ok(format!("identity = 100 exactly, 50 corpora max |delta| = {worst:.1e} ({zero_matches} with a zero-match order)"))
}

fn criterion_6() -> Outcome {
    let mut rng = SeededRng::new(6);
    let vocab = words(12, "d");
    let foreign = words(12, "f");
    for trial in 0..1000 {
        let dictionary: HashSet<String> = vocab
            .iter()
            .filter(|_| rng.below(2) == 0)
            .cloned()
            .collect();
        let n = 1 + rng.below(6) as usize;
        let refs: Vec<Sentence> = (0..n)
            .map(|_| random_sentence(&mut rng, &vocab, 0, 10))
            .collect();
        let hyps: Vec<Sentence> = (0..n)
            .map(|_| random_sentence(&mut rng, &vocab, 0, 10))
            .collect();

        let report = dict_f1(&hyps, &refs, &dictionary).map_err(|e| e.to_string())?;
        let mut matched = 0u64;
        for (h, r) in hyps.iter().zip(&refs) {
            let mut seen = HashSet::new();
            for w in h.iter().filter(|w| dictionary.contains(*w)) {
                if seen.insert(w) {
                    let ch = h.iter().filter(|x| *x == w).count() as u64;
                    let cr = r.iter().filter(|x| *x == w).count() as u64;
                    matched += ch.min(cr);
                }
            }
        }
        ensure(report.matched == matched, || {
            format!("trial {trial}: matched {} vs {matched}", report.matched)
        })?;
        ensure(
            report.matched <= report.predicted.min(report.reference_occurrences),
            || format!("trial {trial}: clipping"),
        )?;

        let same = dict_f1(&refs, &refs, &dictionary).map_err(|e| e.to_string())?;
        if same.reference_occurrences > 0 {
            ensure(
                same.precision == 100.0 && same.recall == 100.0 && same.f1 == 100.0,
                || format!("trial {trial}: identity gives {same}"),
            )?;
        }
        let disjoint: Vec<Sentence> = (0..n)
            .map(|_| random_sentence(&mut rng, &foreign, 0, 10))
            .collect();
        let mut extended = dictionary.clone();
        extended.extend(foreign.iter().take(4).cloned());
        let none = dict_f1(&disjoint, &refs, &extended).map_err(|e| e.to_string())?;
        ensure(
            none.matched == 0 && none.precision == 0.0 && none.recall == 0.0 && none.f1 == 0.0,
            || format!("trial {trial}: disjoint gives {none}"),
        )?;
    }
    Ok("identity, disjointness and clipping hold on 1000 corpora".into())
}

fn check_round(
    state: &ALState<'_>,
    pool: &MonoCorpus,
    oracle: &Oracle,
    before: &HashSet<SentenceId>,
) -> Result<(), String> {
    let labeled: HashSet<SentenceId> = state.labeled_ids().iter().copied().collect();
    let round = state.round();
    ensure(labeled.len() == state.labeled_ids().len(), || {
        format!("round {round}: an id was labelled twice")
    })?;
    ensure(labeled.len() + state.pool().len() == pool.len(), || {
        format!("round {round}: conservation")
    })?;
    ensure(state.pool().iter().all(|id| !labeled.contains(id)), || {
        format!("round {round}: pool and labelled overlap")
    })?;
    ensure(
        state.budget_remaining() + labeled.len() == state.initial_budget(),
        || {
            format!(
                "round {round}: budget {} with {} labelled",
                state.budget_remaining(),
                labeled.len()
            )
        },
    )?;
    let last = state.history().last().ok_or("empty history")?;
    ensure(
        last.labeled_size == labeled.len() && last.budget_remaining == state.budget_remaining(),
        || format!("round {round}: log disagrees with state"),
    )?;
    ensure(last.selected_ids().all(|id| before.contains(&id)), || {
        format!("round {round}: selected a non-pool id")
    })?;
    for (id, pair) in state.labeled_ids().iter().zip(state.labeled().pairs()) {
        ensure(
            Some(&pair.source) == pool.get(*id) && Some(&pair.target) == oracle.reference(*id),
            || format!("round {round}: {id:?} annotated wrongly"),
        )?;
    }
    Ok(())
}

fn simulate<'a>(
    pool: &'a MonoCorpus,
    oracle: &'a Oracle,
    budget: usize,
    check: bool,
) -> Result<ALState<'a>, String> {
    let spec = StrategySpec::new(StrategyKind::CeDiff);
    let mut state = init_simulation(pool, oracle, budget, 100, 7).map_err(|e| e.to_string())?;
    if check {
        check_round(&state, pool, oracle, &pool.ids().collect())?;
    }
    while !state.is_finished() {
        let before = state.pool().clone();
        run_round(&mut state, &spec, None, None).map_err(|e| e.to_string())?;
        if check {
            check_round(&state, pool, oracle, &before.into_iter().collect())?;
        }
    }
    Ok(state)
}

fn criterion_7() -> Outcome {
    let task = generate(&SyntheticConfig {
        pool_size: 10_000,
        test_size: 10,
        seed: 7,
        ..SyntheticConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let (pool, oracle) = Oracle::from_parallel(&task.pool);
    let started = Instant::now();
    let first = simulate(&pool, &oracle, 1000, true)?;
    let elapsed = started.elapsed();
    ensure(first.history().len() == 10, || {
        format!("{} rounds", first.history().len())
    })?;
    ensure(
        first
            .history()
            .iter()
            .all(|r| r.own_half_evaluations.unwrap_or(0) == 0),
        || "own-half evaluation".into(),
    )?;
    let second = simulate(&pool, &oracle, 1000, false)?;
    ensure(first.history() == second.history(), || {
        "two runs with one seed differ".into()
    })?;
    let partial = simulate(&pool, &oracle, 1020, true)?;
    let sizes: Vec<usize> = partial.history().iter().map(|r| r.selected.len()).collect();
    ensure(
        sizes.last() == Some(&20) && sizes.iter().sum::<usize>() == 1020,
        || format!("batches {sizes:?}"),
    )?;
    within(elapsed, 60.0, "ce-diff simulation")?;
    Ok(format!(
        "10 rounds checked, deterministic, final batch 20, {:.2} s per run",
        elapsed.as_secs_f64()
    ))
}

fn criterion_8() -> Outcome {
    let uniform = |d| {
        LexicalMockBackend::uniform(37, d)
            .map(Arc::new)
            .map_err(|e| e.to_string())
    };
    let bridge = Bridge::new(uniform(Direction::Fwd)?, uniform(Direction::Rev)?);
    let mut rng = SeededRng::new(8);
    let vocab = words(50, "r");
    let pool = MonoCorpus::new(
        (0..300)
            .map(|_| random_sentence(&mut rng, &vocab, 1, 15))
            .collect(),
    );
    let scored = score_rttl(&pool_entries(&pool), &bridge, 0).map_err(|e| e.to_string())?;
    let target = 37f64.ln();
    let worst = scored
        .scores()
        .iter()
        .map(|(_, psi)| (psi - target).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-12, || format!("max |psi - ln 37| = {worst:e}"))?;
    for b in [1, 25, 299, 300] {
        let ids = select_top(&scored, b).map_err(|e| e.to_string())?.ids();
        ensure(ids == (0..b).map(SentenceId).collect::<Vec<_>>(), || {
            format!("B = {b}: {ids:?}")
        })?;
    }
    Ok(format!(
        "300 sentences, max |psi - ln 37| = {worst:.1e}, selection = lowest ids"
    ))
}

fn final_coverage(run_dir: &Path, strategy: &str) -> Result<f64, String> {
    let text = fs::read_to_string(run_dir.join(strategy).join("rounds.jsonl"))
        .map_err(|e| e.to_string())?;
    let last: serde_json::Value =
        serde_json::from_str(text.lines().last().ok_or("empty rounds.jsonl")?)
            .map_err(|e| e.to_string())?;
    ensure(last["labeled_size"] == 1000, || {
        format!("{strategy}: final labelled size {}", last["labeled_size"])
    })?;
    last["metrics"]["test_ngram_coverage"]
        .as_f64()
        .ok_or_else(|| format!("{strategy}: no coverage"))
}

fn run_seed(root: &Path, seed: u64) -> Result<(f64, f64), String> {
    let dir = root.join(format!("seed{seed}"));
    for args in [
        vec![
            "synth".to_string(),
            "--output-dir".into(),
            dir.display().to_string(),
            "--seed".into(),
            seed.to_string(),
        ],
        vec![
            "al-run".to_string(),
            "--config".into(),
            dir.join("run.json").display().to_string(),
        ],
    ] {
        let out = dpal().args(&args).output().map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("{}: {}", args[0], String::from_utf8_lossy(&out.stderr))
        })?;
    }
    let runs = dir.join("runs");
    let table = fs::read_to_string(runs.join("comparison.tsv")).map_err(|e| e.to_string())?;
    let rows: Vec<&str> = table.lines().collect();
    ensure(
        rows.first() == Some(&"labeled_size\trandom\tngram-overlap\trttl\tce-diff"),
        || format!("header {rows:?}"),
    )?;
    let sizes: Vec<&str> = rows[1..]
        .iter()
        .map(|r| r.split('\t').next().unwrap_or(""))
        .collect();
    ensure(sizes == ["200", "400", "600", "800", "1000"], || {
        format!("rows {sizes:?}")
    })?;
    ensure(
        rows[1..].iter().all(|r| {
            r.split('\t')
                .skip(1)
                .all(|c| c.parse::<f64>().is_ok_and(|b| (0.0..=100.0).contains(&b)))
        }),
        || "non-numeric BLEU cell".into(),
    )?;
    Ok((
        final_coverage(&runs, "ce-diff")?,
        final_coverage(&runs, "random")?,
    ))
}

fn criterion_9() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root_path = root.path();
    let results: Vec<Result<(f64, f64), String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..5u64)
            .map(|seed| scope.spawn(move || run_seed(root_path, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("seed run panicked".into())))
            .collect()
    });
    let results: Vec<(f64, f64)> = results.into_iter().collect::<Result<_, _>>()?;
    let ce = results.iter().map(|r| r.0).sum::<f64>() / 5.0;
    let random = results.iter().map(|r| r.1).sum::<f64>() / 5.0;
    ensure(ce >= random, || {
        format!("mean coverage ce-diff {ce} < random {random}")
    })?;
    Ok(format!("mean distinct test n-grams covered: ce-diff {ce:.1} >= random {random:.1}; comparison.tsv written"))
}

fn criterion_10() -> Outcome {
    let sentence = |s: &str| -> Sentence { s.split_whitespace().map(String::from).collect() };
    let psi = |labeled: &[Sentence], s: &str, n_max: usize| -> Result<f64, String> {
        let pool = MonoCorpus::new(vec![sentence(s)]);
        let scored = score_ngram_overlap(&pool_entries(&pool), labeled, n_max, false, 0)
            .map_err(|e| e.to_string())?;
        Ok(scored.scores()[0].1)
    };
    let verbatim = psi(&[sentence("x y a b c")], "x y a b c", 4)?;
    ensure(verbatim == 0.0, || format!("verbatim gives {verbatim}"))?;
    let empty = psi(&[], "a b c", 2)?;
    ensure(empty == 5.0, || {
        format!("empty labelled data gives {empty}")
    })?;
    let partial = psi(&[sentence("a b")], "a b c", 2)?;
    ensure(partial == 2.0, || {
        format!("labelled {{a b}} gives {partial}")
    })?;

    let mut rng = SeededRng::new(10);
    let vocab = words(8, "o");
    for trial in 0..200 {
        let base: Vec<Sentence> = (0..rng.below(6))
            .map(|_| random_sentence(&mut rng, &vocab, 1, 8))
            .collect();
        let mut grown = base.clone();
        grown.extend((0..1 + rng.below(4)).map(|_| random_sentence(&mut rng, &vocab, 1, 8)));
        let pool = MonoCorpus::new(
            (0..10)
                .map(|_| random_sentence(&mut rng, &vocab, 0, 10))
                .collect(),
        );
        let n_max = 1 + rng.below(4) as usize;
        for normalize in [false, true] {
            let before = score_ngram_overlap(&pool_entries(&pool), &base, n_max, normalize, 0)
                .map_err(|e| e.to_string())?;
            let after = score_ngram_overlap(&pool_entries(&pool), &grown, n_max, normalize, 0)
                .map_err(|e| e.to_string())?;
            for ((id, a), (_, b)) in before.scores().iter().zip(after.scores()) {
                ensure(b <= a, || {
                    format!("trial {trial}: {id:?} rose from {a} to {b}")
                })?;
            }
        }
    }
    Ok("three hand cases exact, monotone on 200 instances".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("dictionary-preserving BPE golden output", criterion_1),
        ("cross-entropy difference oracle", criterion_2),
        ("cross-entropy oracle", criterion_3),
        ("top-B oracle", criterion_4),
        ("BLEU correctness", criterion_5),
        ("dictionary F1 laws", criterion_6),
        ("active-learning loop invariants", criterion_7),
        ("RTTL degenerate case", criterion_8),
        ("strategy-comparison harness", criterion_9),
        ("n-gram overlap hand cases", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2} s): {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {reason}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
