//! Classification metrics and ROUGE-N recall.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{clean_text, StopWords};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("cannot compute metrics on an empty set")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predictions: &[bool], labels: &[bool]) -> Result<Self, MetricsError> {
        if predictions.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                predictions: predictions.len(),
                labels: labels.len(),
            });
        }
        let mut c = Self::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Evaluation summary. Undefined ratios (zero denominators) are reported as
/// 0 and flagged in `degenerate`, which is not serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge2: Option<f64>,
    #[serde(skip)]
    pub degenerate: bool,
}

impl MetricsReport {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let p = precision.unwrap_or(0.0);
        let r = recall.unwrap_or(0.0);
        Self {
            precision: p,
            recall: r,
            f1: f1_from_pr(p, r),
            accuracy: ratio(c.tp + c.tn, c.total()).unwrap_or(0.0),
            rouge1: None,
            rouge2: None,
            degenerate: precision.is_none() || recall.is_none() || p + r == 0.0,
        }
    }
}

pub fn classification_metrics(predictions: &[bool], labels: &[bool]) -> Result<MetricsReport, MetricsError> {
    if predictions.is_empty() && labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let counts = ConfusionCounts::from_predictions(predictions, labels)?;
    Ok(MetricsReport::from_counts(&counts))
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N recall: clipped n-gram matches over the reference n-gram count.
/// Returns 0 when the reference has no n-grams.
pub fn rouge_n<S: AsRef<str>, T: AsRef<str>>(reference: &[S], candidate: &[T], n: usize) -> f64 {
    assert!(n >= 1, "rouge_n requires n >= 1");
    let reference_counts = ngram_counts(reference, n);
    let total: usize = reference_counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let candidate_counts = ngram_counts(candidate, n);
    let matched: usize = reference_counts
        .iter()
        .map(|(g, &c)| c.min(candidate_counts.get(g).copied().unwrap_or(0)))
        .sum();
    matched as f64 / total as f64
}

/// [`rouge_n`] on raw strings, tokenized with [`clean_text`].
pub fn rouge_n_text(reference: &str, candidate: &str, n: usize) -> f64 {
    let none = StopWords::empty();
    rouge_n(&clean_text(reference, &none), &clean_text(candidate, &none), n)
}

/// Mean ROUGE-N over (reference, candidate) pairs; `None` when empty.
pub fn mean_rouge<S: AsRef<str>, T: AsRef<str>>(pairs: &[(Vec<S>, Vec<T>)], n: usize) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().map(|(r, c)| rouge_n(r, c, n)).sum::<f64>() / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels_with_prevalence(n: usize, positives: usize) -> Vec<bool> {
        (0..n).map(|i| i < positives).collect()
    }

    #[test]
    fn constant_predictors_on_imbalanced_set() {
        let labels = labels_with_prevalence(1000, 55);
        let zeros = classification_metrics(&vec![false; 1000], &labels).unwrap();
        assert_eq!((zeros.precision, zeros.recall, zeros.f1), (0.0, 0.0, 0.0));
        assert!((zeros.accuracy - 0.945).abs() < 1e-12);
        assert!(zeros.degenerate);

        let ones = classification_metrics(&vec![true; 1000], &labels).unwrap();
        assert!((ones.precision - 0.055).abs() < 1e-12);
        assert_eq!(ones.recall, 1.0);
        assert!((ones.f1 - 0.105).abs() < 0.001);
        assert!((ones.accuracy - 0.055).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let labels = [true, false, false, true];
        let r = classification_metrics(&labels, &labels).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.accuracy), (1.0, 1.0, 1.0, 1.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn errors_on_mismatch_and_empty() {
        assert_eq!(
            classification_metrics(&[true], &[true, false]).unwrap_err(),
            MetricsError::LengthMismatch { predictions: 1, labels: 2 }
        );
        assert_eq!(classification_metrics(&[], &[]).unwrap_err(), MetricsError::Empty);
    }

    #[test]
    fn f1_reference_values() {
        assert!((f1_from_pr(0.990, 0.811) - 0.892).abs() < 0.001);
        assert_eq!(f1_from_pr(1.0, 1.0), 1.0);
        assert!((f1_from_pr(0.055, 1.0) - 0.104).abs() < 0.001);
        assert_eq!(f1_from_pr(0.0, 0.0), 0.0);
    }

    #[test]
    fn rouge_reference_values() {
        let abc = ["a", "b", "c"];
        assert_eq!(rouge_n(&abc, &abc, 1), 1.0);
        assert_eq!(rouge_n(&abc, &abc, 2), 1.0);
        assert!((rouge_n(&abc, &["a", "b", "d"], 1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_n(&abc, &["x", "y"], 2), 0.0);
        assert_eq!(rouge_n(&["a"], &["a"], 2), 0.0);
    }

    #[test]
    fn rouge_clips_repeated_candidate_ngrams() {
        assert_eq!(rouge_n(&["a", "b"], &["a", "a", "a"], 1), 0.5);
        assert!((rouge_n_text("The cat sat.", "the CAT", 1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn report_serializes_fixed_keys() {
        let mut r = MetricsReport::from_counts(&ConfusionCounts { tp: 1, fp: 1, fn_: 0, tn: 2 });
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"precision":0.5,"recall":1.0,"f1":0.6666666666666666,"accuracy":0.75}"#);
        r.rouge1 = Some(0.5);
        r.rouge2 = Some(0.25);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.ends_with(r#""rouge1":0.5,"rouge2":0.25}"#));
    }

    proptest! {
        #[test]
        fn self_labels_give_all_ones(labels in proptest::collection::vec(any::<bool>(), 1..50)) {
            prop_assume!(labels.iter().any(|&b| b));
            let r = classification_metrics(&labels, &labels).unwrap();
            prop_assert_eq!((r.precision, r.recall, r.f1, r.accuracy), (1.0, 1.0, 1.0, 1.0));
        }

        #[test]
        fn invariant_under_joint_permutation(
            pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40),
            rot in 0usize..40,
        ) {
            let (p, y): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            rotated.reverse();
            let (p2, y2): (Vec<bool>, Vec<bool>) = rotated.into_iter().unzip();
            prop_assert_eq!(classification_metrics(&p, &y).unwrap(), classification_metrics(&p2, &y2).unwrap());
        }

        #[test]
        fn f1_matches_report(tp in 0usize..20, fp in 0usize..20, fn_ in 0usize..20, tn in 0usize..20) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            let r = MetricsReport::from_counts(&ConfusionCounts { tp, fp, fn_, tn });
            prop_assert_eq!(r.f1, f1_from_pr(r.precision, r.recall));
            prop_assert!((0.0..=1.0).contains(&r.f1) && (0.0..=1.0).contains(&r.accuracy));
        }
    }
}
