//! Classification and text-overlap metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DetectionReport, Judgment};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("label and prediction counts differ: {labels} vs {predictions}")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("no reports to score")]
    Empty,
}

/// Two-class confusion matrix, keyed by (gold, predicted).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub hal_as_hal: u64,
    pub hal_as_non: u64,
    pub non_as_hal: u64,
    pub non_as_non: u64,
}

impl ConfusionCounts {
    pub fn from_pairs(labels: &[Judgment], predictions: &[Judgment]) -> Result<Self, MetricError> {
        if labels.len() != predictions.len() {
            return Err(MetricError::LengthMismatch {
                labels: labels.len(),
                predictions: predictions.len(),
            });
        }
        let mut c = Self::default();
        for (g, p) in labels.iter().zip(predictions) {
            c.add(*g, *p);
        }
        Ok(c)
    }

    pub fn add(&mut self, gold: Judgment, predicted: Judgment) {
        use Judgment::*;
        match (gold, predicted) {
            (Hallucination, Hallucination) => self.hal_as_hal += 1,
            (Hallucination, NonHallucination) => self.hal_as_non += 1,
            (NonHallucination, Hallucination) => self.non_as_hal += 1,
            (NonHallucination, NonHallucination) => self.non_as_non += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.hal_as_hal + self.hal_as_non + self.non_as_hal + self.non_as_non
    }

    /// `(tp, fp, fn)` treating `class` as positive.
    pub fn class_counts(&self, class: Judgment) -> (u64, u64, u64) {
        match class {
            Judgment::Hallucination => (self.hal_as_hal, self.non_as_hal, self.hal_as_non),
            Judgment::NonHallucination => (self.non_as_non, self.hal_as_non, self.non_as_hal),
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision(counts: &ConfusionCounts, class: Judgment) -> f64 {
    let (tp, fp, _) = counts.class_counts(class);
    ratio(tp, tp + fp)
}

pub fn recall(counts: &ConfusionCounts, class: Judgment) -> f64 {
    let (tp, _, fn_) = counts.class_counts(class);
    ratio(tp, tp + fn_)
}

pub fn f1_per_class(counts: &ConfusionCounts, class: Judgment) -> f64 {
    let p = precision(counts, class);
    let r = recall(counts, class);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn f1_macro(counts: &ConfusionCounts) -> f64 {
    (f1_per_class(counts, Judgment::Hallucination)
        + f1_per_class(counts, Judgment::NonHallucination))
        / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub counts: ConfusionCounts,
    pub f1_macro: f64,
    pub f1_hallucination: f64,
    pub f1_non_hallucination: f64,
}

impl DetectionMetrics {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        Self {
            counts,
            f1_macro: f1_macro(&counts),
            f1_hallucination: f1_per_class(&counts, Judgment::Hallucination),
            f1_non_hallucination: f1_per_class(&counts, Judgment::NonHallucination),
        }
    }
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_matches(
    cand: &HashMap<&[String], usize>,
    reference: &HashMap<&[String], usize>,
) -> usize {
    cand.iter()
        .map(|(g, c)| (*c).min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

fn f_measure(matches: usize, cand_total: usize, ref_total: usize) -> f64 {
    if matches == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = matches as f64 / cand_total as f64;
    let r = matches as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F-measure with clipped n-gram counts.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let (cc, rc) = (ngram_counts(&c, n), ngram_counts(&r, n));
    let totals = |t: &[String]| (t.len() + 1).saturating_sub(n);
    f_measure(clipped_matches(&cc, &rc), totals(&c), totals(&r))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F-measure over the longest common subsequence.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    f_measure(lcs_len(&c, &r), c.len(), r.len())
}

/// Sentence BLEU-4: geometric mean of clipped 1- to 4-gram precisions,
/// add-one smoothed where an order has no match, times the brevity penalty.
pub fn bleu4(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let total = (c.len() + 1).saturating_sub(n);
        let m = clipped_matches(&ngram_counts(&c, n), &ngram_counts(&r, n));
        let p = if m == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            m as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let bp = if c.len() < r.len() {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / 4.0).exp()
}

/// Share of reports with no hallucinated sentence.
pub fn zero_hallucination_rate(reports: &[DetectionReport]) -> Result<f64, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::Empty);
    }
    let clean = reports.iter().filter(|r| !r.has_hallucination()).count();
    Ok(clean as f64 / reports.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub bleu4: f64,
}

impl OverlapScores {
    pub fn score(candidate: &str, reference: &str) -> Self {
        Self {
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rouge_l: rouge_l(candidate, reference),
            bleu4: bleu4(candidate, reference),
        }
    }

    /// Arithmetic mean; zero for no input.
    pub fn mean(scores: &[OverlapScores]) -> Self {
        if scores.is_empty() {
            return Self::default();
        }
        let n = scores.len() as f64;
        let sum = |f: fn(&OverlapScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        Self {
            rouge1: sum(|s| s.rouge1),
            rouge2: sum(|s| s.rouge2),
            rouge_l: sum(|s| s.rouge_l),
            bleu4: sum(|s| s.bleu4),
        }
    }
}
