//! Entity-level scoring, repeated noisy evaluation and error analysis.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::alignment::levenshtein_distance;
use crate::corpus::{Corpus, Label};
use crate::error::EvalError;
use crate::noise::ConfusionMatrix;
use crate::perturb::{perturb_corpus, NoiseSeed};
use crate::spans::decode_spans;
use crate::tagger::TaggerModel;


#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Micro-averaged entity scores plus a per-class breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    pub per_class: BTreeMap<String, Counts>,
}

/// Exact-match span scoring: a predicted span counts only if its start, end
/// and class all match a gold span.
pub fn micro_f1(gold: &Corpus, predicted: &[Vec<Label>]) -> Result<EvalReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::SentenceCount { expected: gold.len(), found: predicted.len() });
    }
    let mut counts = Counts::default();
    let mut per_class: BTreeMap<String, Counts> = gold.label_inventory().iter().map(|c| (c.clone(), Counts::default())).collect();
    for (index, (sentence, pred)) in gold.sentences().iter().zip(predicted).enumerate() {
        if sentence.len() != pred.len() {
            return Err(EvalError::TokenCount { index, expected: sentence.len(), found: pred.len() });
        }
        let gold_spans = decode_spans(sentence.labels());
        let pred_spans = decode_spans(pred);
        for s in &gold_spans {
            counts.gold += 1;
            per_class.entry(s.class.clone()).or_default().gold += 1;
        }
        for s in &pred_spans {
            counts.predicted += 1;
            let class = per_class.entry(s.class.clone()).or_default();
            class.predicted += 1;
            if gold_spans.contains(s) {
                counts.correct += 1;
                class.correct += 1;
            }
        }
    }
    Ok(EvalReport { precision: counts.precision(), recall: counts.recall(), f1: counts.f1(), counts, per_class })
}

pub fn predict(model: &TaggerModel, corpus: &Corpus) -> Vec<Vec<Label>> {
    corpus.sentences().iter().map(|s| model.decode(s.tokens())).collect()
}

pub fn evaluate(model: &TaggerModel, corpus: &Corpus) -> EvalReport {
    micro_f1(corpus, &predict(model, corpus)).expect("predictions are shaped like the corpus")
}

/// F1 under one confusion matrix across several perturbation seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixResult {
    pub name: String,
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single seed.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyEvalTable {
    pub clean_f1: f64,
    pub rows: Vec<MatrixResult>,
}

/// Mean and sample standard deviation, shifted by the first value so that
/// constant input yields exactly that value and 0.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let Some(&shift) = values.first() else {
        return (f64::NAN, f64::NAN);
    };
    let n = values.len() as f64;
    let offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
    if values.len() < 2 {
        return (shift, 0.0);
    }
    let var = values.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / (n - 1.0);
    (shift + offset, var.sqrt())
}

/// Scores the model on the clean test set once and on one perturbed copy per
/// (matrix, seed).
pub fn evaluate_noisy(
    model: &TaggerModel,
    clean_test: &Corpus,
    matrices: &[(String, ConfusionMatrix)],
    seeds: &[u64],
) -> Result<NoisyEvalTable, EvalError> {
    if seeds.is_empty() && !matrices.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let clean_f1 = evaluate(model, clean_test).f1;
    let rows = matrices
        .iter()
        .map(|(name, matrix)| {
            let per_seed: Vec<(u64, f64)> = seeds
                .iter()
                .map(|&seed| (seed, evaluate(model, &perturb_corpus(clean_test, matrix, NoiseSeed(seed))).f1))
                .collect();
            let f1s: Vec<f64> = per_seed.iter().map(|(_, f)| *f).collect();
            let (mean, std) = mean_and_std(&f1s);
            MatrixResult { name: name.clone(), per_seed, mean, std }
        })
        .collect();
    Ok(NoisyEvalTable { clean_f1, rows })
}

impl NoisyEvalTable {
    /// Human-readable table, F1 in percent.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max("input".len());
        let mut out = String::new();
        writeln!(out, "{:<width$}  {:>15}", "input", "F1").unwrap();
        writeln!(out, "{:<width$}  {:>15.2}", "clean", 100.0 * self.clean_f1).unwrap();
        for r in &self.rows {
            let cell = format!("{:.2} ± {:.2}", 100.0 * r.mean, 100.0 * r.std);
            writeln!(out, "{:<width$}  {:>15}", r.name, cell).unwrap();
        }
        out
    }

    /// `matrix,seed,f1` with one line per evaluation; the clean input has an
    /// empty seed.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("matrix,seed,f1\n");
        writeln!(out, "clean,,{}", self.clean_f1).unwrap();
        for r in &self.rows {
            for (seed, f1) in &r.per_seed {
                writeln!(out, "{},{seed},{f1}", r.name).unwrap();
            }
        }
        out
    }

    /// `matrix,f1_mean,f1_std`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("matrix,f1_mean,f1_std\n");
        writeln!(out, "clean,{},0", self.clean_f1).unwrap();
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.name, r.mean, r.std).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Bucket {
    pub tokens: usize,
    pub errors: usize,
}

impl Bucket {
    pub fn rate(&self) -> f64 {
        ratio(self.errors, self.tokens)
    }

    fn record(&mut self, error: bool) {
        self.tokens += 1;
        self.errors += usize::from(error);
    }

    pub fn merge(&self, other: &Bucket) -> Bucket {
        Bucket { tokens: self.tokens + other.tokens, errors: self.errors + other.errors }
    }
}

/// Token error rates bucketed by edit distance to the clean token and by
/// gold entity class. `O` is treated as a class of its own.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorAnalysisReport {
    /// Distances 0, 1, 2 and 3-or-more.
    pub by_distance: [Bucket; 4],
    pub clean_by_class: BTreeMap<String, Bucket>,
    pub perturbed_by_class: BTreeMap<String, Bucket>,
}

pub const DISTANCE_BUCKETS: [&str; 4] = ["0", "1", "2", ">=3"];

impl ErrorAnalysisReport {
    pub fn total_tokens(&self) -> usize {
        self.by_distance.iter().map(|b| b.tokens).sum()
    }

    /// Every token whose surface form changed.
    pub fn perturbed(&self) -> Bucket {
        self.by_distance[1..].iter().fold(Bucket::default(), |a, b| a.merge(b))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,key,tokens,errors,error_rate\n");
        for (key, b) in DISTANCE_BUCKETS.iter().zip(&self.by_distance) {
            writeln!(out, "distance,{key},{},{},{}", b.tokens, b.errors, b.rate()).unwrap();
        }
        for (section, map) in [("class_clean", &self.clean_by_class), ("class_perturbed", &self.perturbed_by_class)] {
            for (key, b) in map {
                writeln!(out, "{section},{key},{},{},{}", b.tokens, b.errors, b.rate()).unwrap();
            }
        }
        out
    }
}

fn class_of(label: &Label) -> &str {
    label.class().unwrap_or("O")
}

/// Error analysis from predictions already made on `noisy`.
pub fn analyze_predictions(clean: &Corpus, noisy: &Corpus, predicted: &[Vec<Label>]) -> Result<ErrorAnalysisReport, EvalError> {
    if clean.len() != noisy.len() {
        return Err(EvalError::SentenceCount { expected: clean.len(), found: noisy.len() });
    }
    if predicted.len() != noisy.len() {
        return Err(EvalError::SentenceCount { expected: noisy.len(), found: predicted.len() });
    }
    let mut report = ErrorAnalysisReport::default();
    for class in clean.label_inventory().iter().map(String::as_str).chain(["O"]) {
        report.clean_by_class.insert(class.to_string(), Bucket::default());
        report.perturbed_by_class.insert(class.to_string(), Bucket::default());
    }
    for (index, ((c, n), pred)) in clean.sentences().iter().zip(noisy.sentences()).zip(predicted).enumerate() {
        if c.len() != n.len() || pred.len() != n.len() {
            let found = if c.len() != n.len() { n.len() } else { pred.len() };
            return Err(EvalError::TokenCount { index, expected: c.len(), found });
        }
        for t in 0..c.len() {
            let d = levenshtein_distance(&c.tokens()[t], &n.tokens()[t]);
            let gold = class_of(&c.labels()[t]);
            let error = class_of(&pred[t]) != gold;
            report.by_distance[d.min(3)].record(error);
            let by_class = if d == 0 { &mut report.clean_by_class } else { &mut report.perturbed_by_class };
            by_class.entry(gold.to_string()).or_default().record(error);
        }
    }
    Ok(report)
}

/// Runs the model on `noisy` and compares its entity classes with the gold
/// labels of `clean`.
pub fn error_analysis(model: &TaggerModel, clean: &Corpus, noisy: &Corpus) -> Result<ErrorAnalysisReport, EvalError> {
    if clean.len() != noisy.len() {
        return Err(EvalError::SentenceCount { expected: clean.len(), found: noisy.len() });
    }
    for (index, (c, n)) in clean.sentences().iter().zip(noisy.sentences()).enumerate() {
        if c.len() != n.len() {
            return Err(EvalError::TokenCount { index, expected: c.len(), found: n.len() });
        }
    }
    analyze_predictions(clean, noisy, &predict(model, noisy))
}
