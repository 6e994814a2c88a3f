//! Corpus BLEU and dictionary-word precision/recall/F1.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Case-sensitive single-reference corpus BLEU with exponential smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub bleu: f64,
    /// Modified n-gram precisions as fractions, smoothed where the match count is zero.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_length: u64,
    pub ref_length: u64,
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BLEU = {:.1} {:.1}/{:.1}/{:.1}/{:.1} (BP = {:.3} ratio = {:.3} hyp_len = {} ref_len = {})",
            self.bleu,
            100.0 * self.precisions[0],
            100.0 * self.precisions[1],
            100.0 * self.precisions[2],
            100.0 * self.precisions[3],
            self.brevity_penalty,
            if self.ref_length == 0 { 0.0 } else { self.hyp_length as f64 / self.ref_length as f64 },
            self.hyp_length,
            self.ref_length
        )
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

#[derive(Default, Clone, Copy)]
struct BleuStats {
    matches: [u64; MAX_ORDER],
    totals: [u64; MAX_ORDER],
    hyp_length: u64,
    ref_length: u64,
}

impl BleuStats {
    fn of(hyp: &[String], reference: &[String]) -> Self {
        let mut stats = BleuStats {
            hyp_length: hyp.len() as u64,
            ref_length: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(hyp, n) {
                stats.matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        }
        stats
    }

    fn add(mut self, other: Self) -> Self {
        for i in 0..MAX_ORDER {
            self.matches[i] += other.matches[i];
            self.totals[i] += other.totals[i];
        }
        self.hyp_length += other.hyp_length;
        self.ref_length += other.ref_length;
        self
    }
}

fn check_aligned(hypotheses: &[Sentence], references: &[Sentence]) -> Result<()> {
    if hypotheses.len() != references.len() {
        return Err(Error::CountMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    Ok(())
}

pub fn corpus_bleu(hypotheses: &[Sentence], references: &[Sentence]) -> Result<BleuReport> {
    check_aligned(hypotheses, references)?;
    if hypotheses.is_empty() {
        return Err(Error::EmptyCorpus("BLEU needs at least one sentence pair"));
    }
    let stats = hypotheses
        .par_iter()
        .zip(references)
        .map(|(h, r)| BleuStats::of(h, r))
        .reduce(BleuStats::default, BleuStats::add);

    let mut precisions = [0.0; MAX_ORDER];
    let mut smooth = 1.0;
    for ((precision, &matches), &total) in
        precisions.iter_mut().zip(&stats.matches).zip(&stats.totals)
    {
        if total == 0 {
            break;
        }
        *precision = if matches == 0 {
            smooth *= 2.0;
            1.0 / (smooth * total as f64)
        } else {
            matches as f64 / total as f64
        };
    }
    let brevity_penalty = if stats.hyp_length == 0 {
        0.0
    } else if stats.hyp_length < stats.ref_length {
        (1.0 - stats.ref_length as f64 / stats.hyp_length as f64).exp()
    } else {
        1.0
    };
    let bleu = if stats.matches.iter().all(|&m| m == 0) || precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        matches: stats.matches,
        totals: stats.totals,
        hyp_length: stats.hyp_length,
        ref_length: stats.ref_length,
    })
}

/// Occurrence-level precision/recall/F1 over dictionary words, clipped per sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictEvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: u64,
    pub predicted: u64,
    pub reference_occurrences: u64,
}

impl fmt::Display for DictEvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P = {:.1} R = {:.1} F1 = {:.1} (matched = {} predicted = {} reference = {})",
            self.precision,
            self.recall,
            self.f1,
            self.matched,
            self.predicted,
            self.reference_occurrences
        )
    }
}

fn percentage(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn dictionary_counts<'s>(
    sentence: &'s [String],
    dictionary_words: &HashSet<String>,
) -> HashMap<&'s str, u64> {
    let mut counts = HashMap::new();
    for w in sentence.iter().filter(|w| dictionary_words.contains(*w)) {
        *counts.entry(w.as_str()).or_insert(0) += 1;
    }
    counts
}

pub fn dict_f1(
    hypotheses: &[Sentence],
    references: &[Sentence],
    dictionary_words: &HashSet<String>,
) -> Result<DictEvalReport> {
    check_aligned(hypotheses, references)?;
    let (matched, predicted, reference_occurrences) = hypotheses
        .par_iter()
        .zip(references)
        .map(|(h, r)| {
            let (hc, rc) = (
                dictionary_counts(h, dictionary_words),
                dictionary_counts(r, dictionary_words),
            );
            let matched: u64 = hc
                .iter()
                .map(|(w, c)| (*c).min(rc.get(w).copied().unwrap_or(0)))
                .sum();
            (matched, hc.values().sum::<u64>(), rc.values().sum::<u64>())
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let precision = percentage(matched, predicted);
    let recall = percentage(matched, reference_occurrences);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(DictEvalReport {
        precision,
        recall,
        f1,
        matched,
        predicted,
        reference_occurrences,
    })
}
