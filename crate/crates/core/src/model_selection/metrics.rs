//! Binary classification metrics with errors as the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let positives = labels.iter().filter(|&&l| l).count();
    (positives, labels.len() - positives)
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Degenerate("scores contain NaN".into()));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(format!(
            "both classes required (positives={pos}, negatives={neg})"
        )));
    }
    Ok((pos, neg))
}

/// Rank-based (Mann-Whitney) area under the ROC curve.
///
/// Tied positive/negative pairs earn half credit. The statistic is accumulated
/// in half-units so it stays exact for any realistic sample size.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // 2U = sum over positives of (2 * negatives strictly below + negatives tied)
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        let tied_neg = (j - i) as u128 - tied_pos;
        twice_u += tied_pos * (2 * negatives_below + tied_neg);
        negatives_below += tied_neg;
        i = j;
    }
    Ok(twice_u as f64 / (2.0 * pos as f64 * neg as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub threshold: f64,
    pub n_test: usize,
    /// Indexed by class: `[non-error, error]`.
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub confusion: ConfusionCounts,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// AUC plus thresholded accuracy and macro-averaged precision/recall.
///
/// A class that is never predicted has precision 0.
pub fn classification_report(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    let auc = auc(scores, labels)?;
    let c = confusion(scores, labels, threshold);
    let n = scores.len();
    let precision = [ratio(c.tn, c.tn + c.fn_), ratio(c.tp, c.tp + c.fp)];
    let recall = [ratio(c.tn, c.tn + c.fp), ratio(c.tp, c.tp + c.fn_)];
    Ok(EvalReport {
        auc,
        accuracy: ratio(c.tp + c.tn, n),
        macro_precision: 0.5 * (precision[0] + precision[1]),
        macro_recall: 0.5 * (recall[0] + recall[1]),
        threshold,
        n_test: n,
        precision,
        recall,
        confusion: c,
    })
}
