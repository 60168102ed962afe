//! Macro-F1, Spearman on predictions, the majority baseline and run summaries.
//!
//! Labels are class indices. Macro-F1 averages over the declared class set,
//! so a class that is neither predicted nor present contributes an F1 of 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {preds} predictions vs {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no items to evaluate")]
    Empty,
    #[error("label {0} is not in the declared class set")]
    UnknownLabel(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub macro_f1: f64,
    pub spearman: Option<f64>,
    /// F1 per class, aligned with `classes`.
    pub per_class_f1: Vec<f64>,
    pub classes: Vec<usize>,
    pub n: usize,
}

impl EvalResult {
    pub fn class_f1(&self, class: usize) -> Option<f64> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .map(|i| self.per_class_f1[i])
    }
}

fn check_labels(preds: &[usize], golds: &[usize], classes: &[usize]) -> Result<(), MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&bad) = preds.iter().chain(golds).find(|l| !classes.contains(l)) {
        return Err(MetricsError::UnknownLabel(bad));
    }
    Ok(())
}

/// Unweighted mean of per-class F1 over `classes`. Spearman is filled in when
/// the labels are ordinal and both sides vary.
pub fn macro_f1(preds: &[usize], golds: &[usize], classes: &[usize]) -> Result<EvalResult, MetricsError> {
    check_labels(preds, golds, classes)?;
    let per_class_f1: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&p, &g) in preds.iter().zip(golds) {
                match (p == c, g == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            // 2PR/(P+R) == 2tp/(2tp+fp+fn); zero when P+R == 0
            let denom = 2 * tp + fp + fn_;
            if tp == 0 || denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .collect();
    Ok(EvalResult {
        macro_f1: stats::mean(&per_class_f1),
        spearman: spearman_eval(preds, golds)?,
        per_class_f1,
        classes: classes.to_vec(),
        n: golds.len(),
    })
}

/// Most frequent class, ties to the lowest.
pub fn majority_class(golds: &[usize]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &g in golds {
        *counts.entry(g).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(usize, usize)>, (class, count)| match best {
            Some((_, best_count)) if best_count >= count => best,
            _ => Some((class, count)),
        })
        .map(|(class, _)| class)
}

/// Scores the constant prediction of the training majority class.
pub fn majority_baseline(
    train_golds: &[usize],
    test_golds: &[usize],
    classes: &[usize],
) -> Result<EvalResult, MetricsError> {
    let majority = majority_class(train_golds).ok_or(MetricsError::Empty)?;
    let preds = vec![majority; test_golds.len()];
    macro_f1(&preds, test_golds, classes)
}

/// Tie-aware Spearman correlation between predicted and gold labels.
/// `None` for fewer than two items or when either side is constant.
pub fn spearman_eval(preds: &[usize], golds: &[usize]) -> Result<Option<f64>, MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    let x: Vec<f64> = preds.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = golds.iter().map(|&v| v as f64).collect();
    Ok(stats::spearman(&x, &y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        (!values.is_empty()).then(|| Self {
            mean: stats::mean(values),
            std: stats::population_std(values),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    pub macro_f1: MeanStd,
    /// Over the runs with a defined Spearman value.
    pub spearman: Option<MeanStd>,
    pub spearman_excluded: usize,
    pub per_class_f1: Vec<MeanStd>,
    pub classes: Vec<usize>,
}

/// Mean and population standard deviation across repeated runs.
pub fn summarize_runs(results: &[EvalResult]) -> Result<RunSummary, MetricsError> {
    let first = results.first().ok_or(MetricsError::Empty)?;
    let macros: Vec<f64> = results.iter().map(|r| r.macro_f1).collect();
    let spearmans: Vec<f64> = results.iter().filter_map(|r| r.spearman).collect();
    let per_class_f1 = (0..first.classes.len())
        .map(|i| {
            let vals: Vec<f64> = results.iter().map(|r| r.per_class_f1[i]).collect();
            MeanStd::of(&vals).expect("non-empty")
        })
        .collect();
    Ok(RunSummary {
        runs: results.len(),
        macro_f1: MeanStd::of(&macros).expect("non-empty"),
        spearman: MeanStd::of(&spearmans),
        spearman_excluded: results.len() - spearmans.len(),
        per_class_f1,
        classes: first.classes.clone(),
    })
}
