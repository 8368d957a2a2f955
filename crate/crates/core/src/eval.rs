//! Table-style evaluation metrics and cluster purity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {predictions} predictions, {truth} truth values")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("truth contains no positives")]
    NoPositives,
    #[error("empty input")]
    EmptyInput,
    #[error("all points are identical")]
    DegenerateVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n: usize,
}

impl EvalReport {
    /// Builds a report from raw counts, applying the P=0 and F1=0 conventions.
    pub fn from_counts(task: &str, tp: usize, fp: usize, fn_: usize, n: usize) -> Self {
        let (precision, recall, f1) = prf_from_counts(tp, fp, fn_);
        EvalReport {
            task: task.to_string(),
            precision,
            recall,
            f1,
            mrr: None,
            tp,
            fp,
            fn_,
            n,
        }
    }

    /// One line shaped like a results-table row.
    pub fn table_row(&self) -> String {
        let mrr = self.mrr.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
        format!(
            "task={} precision={:.4} recall={:.4} f1={:.4} mrr={} tp={} fp={} fn={} n={}",
            self.task, self.precision, self.recall, self.f1, mrr, self.tp, self.fp, self.fn_, self.n
        )
    }
}

/// F1 is the harmonic mean of P and R, or 0 when both are 0.
pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn prf_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    (p, r, f1_score(p, r))
}

/// Confusion counts `(tp, fp, fn)`.
pub fn confusion(predictions: &[bool], truth: &[bool]) -> Result<(usize, usize, usize), EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    let mut c = (0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Binary precision, recall and F1. Precision is 0 when nothing is predicted
/// positive.
pub fn precision_recall_f1(predictions: &[bool], truth: &[bool]) -> Result<(f64, f64, f64), EvalError> {
    let (tp, fp, fn_) = confusion(predictions, truth)?;
    if tp + fn_ == 0 {
        return Err(EvalError::NoPositives);
    }
    Ok(prf_from_counts(tp, fp, fn_))
}

/// 1-based rank of `truth` in `ranked`, if present.
pub fn rank_of<T: PartialEq>(ranked: &[T], truth: &T) -> Option<usize> {
    ranked.iter().position(|x| x == truth).map(|i| i + 1)
}

/// Mean reciprocal rank; a truth missing from its list contributes 0.
pub fn mrr<T: PartialEq>(ranked_lists: &[Vec<T>], truths: &[T]) -> Result<f64, EvalError> {
    if ranked_lists.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if ranked_lists.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: ranked_lists.len(),
            truth: truths.len(),
        });
    }
    let total: f64 = ranked_lists
        .iter()
        .zip(truths)
        .map(|(list, t)| rank_of(list, t).map_or(0.0, |r| 1.0 / r as f64))
        .sum();
    Ok(total / ranked_lists.len() as f64)
}

/// Fraction of points whose cluster's majority label equals their own label.
/// Majority ties go to the smallest label.
pub fn purity<L: Ord + Clone>(clusters: &[usize], labels: &[L]) -> Result<f64, EvalError> {
    if clusters.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: clusters.len(),
            truth: labels.len(),
        });
    }
    if clusters.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut counts: BTreeMap<usize, BTreeMap<L, usize>> = BTreeMap::new();
    for (&c, l) in clusters.iter().zip(labels) {
        *counts.entry(c).or_default().entry(l.clone()).or_default() += 1;
    }
    let majority: usize = counts.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    Ok(majority as f64 / clusters.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counts() {
        // TP=2, FP=1, FN=3
        let pred = [true, true, true, false, false, false, false];
        let truth = [true, true, false, true, true, true, false];
        let (p, r, f) = precision_recall_f1(&pred, &truth).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        assert!((r - 0.4).abs() < 1e-15);
        assert!((f - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_degenerate() {
        let t = [true, false, true, false];
        assert_eq!(precision_recall_f1(&t, &t).unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(precision_recall_f1(&[false; 4], &t).unwrap(), (0.0, 0.0, 0.0));
        assert_eq!(precision_recall_f1(&t, &[false; 4]), Err(EvalError::NoPositives));
        assert!(matches!(
            precision_recall_f1(&t, &t[..3]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mrr_hand_examples() {
        let lists = vec![vec!["a", "b", "c", "d"]; 3];
        assert_eq!(mrr(&lists, &["a", "b", "d"]).unwrap(), (1.0 + 0.5 + 0.25) / 3.0);
        assert_eq!(mrr(&lists, &["a", "a", "a"]).unwrap(), 1.0);
        assert_eq!(mrr(&lists[..1], &["z"]).unwrap(), 0.0);
        assert_eq!(mrr::<&str>(&[], &[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn purity_counts_majorities() {
        assert_eq!(purity(&[0, 0, 1, 1], &[7, 7, 8, 8]).unwrap(), 1.0);
        assert_eq!(purity(&[0, 0, 0, 1], &[7, 7, 8, 8]).unwrap(), 0.75);
        assert_eq!(purity(&[0, 0, 0, 0], &[1, 2, 3, 4]).unwrap(), 0.25);
    }

    #[test]
    fn report_serialises_fn_key() {
        let r = EvalReport::from_counts("ad", 2, 1, 3, 10);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for k in ["precision", "recall", "f1", "tp", "fp", "fn", "n"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v.get("mrr").is_none());
    }
}
