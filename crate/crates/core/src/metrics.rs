//! Utility and fairness metrics.
//!
//! Fairness gaps compare the two groups of one binary sensitive column:
//! ΔSP is the absolute difference of positive-prediction rates, ΔEO the
//! absolute difference of true-positive rates. Either is undefined when a
//! group (or its positive stratum) is empty; that state propagates as an
//! explicit marker instead of NaN so tiny ablation splits cannot silently
//! corrupt aggregates.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A metric value that may be undefined for a degenerate group layout.
pub type MaybeMetric = Option<f64>;

/// Per-seed evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub acc: f64,
    pub f1: f64,
    pub auroc: MaybeMetric,
    /// ΔSP per sensitive column.
    pub delta_sp: Vec<MaybeMetric>,
    /// ΔEO per sensitive column.
    pub delta_eo: Vec<MaybeMetric>,
    /// R²(prediction probabilities, S) on the evaluated nodes.
    pub sensitive_dcor: f64,
}

/// |P(ŷ=1 | s=0) − P(ŷ=1 | s=1)|.
pub fn delta_sp(yhat: &[u8], s: &[f64]) -> Result<f64> {
    assert_eq!(yhat.len(), s.len());
    let (mut n0, mut n1, mut p0, mut p1) = (0u64, 0u64, 0u64, 0u64);
    for (&y, &g) in yhat.iter().zip(s) {
        if g == 0.0 {
            n0 += 1;
            p0 += u64::from(y);
        } else {
            n1 += 1;
            p1 += u64::from(y);
        }
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::Validation("a sensitive group is empty".into()));
    }
    Ok((p0 as f64 / n0 as f64 - p1 as f64 / n1 as f64).abs())
}

/// |P(ŷ=1 | y=1, s=0) − P(ŷ=1 | y=1, s=1)|.
pub fn delta_eo(yhat: &[u8], y: &[u8], s: &[f64]) -> Result<f64> {
    assert_eq!(yhat.len(), y.len());
    assert_eq!(yhat.len(), s.len());
    let (mut n0, mut n1, mut p0, mut p1) = (0u64, 0u64, 0u64, 0u64);
    for ((&yh, &yv), &g) in yhat.iter().zip(y).zip(s) {
        if yv != 1 {
            continue;
        }
        if g == 0.0 {
            n0 += 1;
            p0 += u64::from(yh);
        } else {
            n1 += 1;
            p1 += u64::from(yh);
        }
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::Validation(
            "a sensitive group has no positive labels".into(),
        ));
    }
    Ok((p0 as f64 / n0 as f64 - p1 as f64 / n1 as f64).abs())
}

/// Mann–Whitney AUROC: the probability a random positive outranks a random
/// negative, ties counted one half.
pub fn auroc(scores: &[f64], y: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), y.len());
    let npos = y.iter().filter(|&&v| v == 1).count();
    let nneg = y.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(Error::Validation("AUROC needs both classes".into()));
    }
    // rank-sum over sorted scores with midrank ties
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if y[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (npos * (npos + 1)) as f64 / 2.0;
    Ok(u / (npos * nneg) as f64)
}

/// Fraction of correct predictions.
pub fn accuracy(yhat: &[u8], y: &[u8]) -> f64 {
    assert!(!y.is_empty());
    let hits = yhat.iter().zip(y).filter(|(a, b)| a == b).count();
    hits as f64 / y.len() as f64
}

/// F1 of the positive class; 0 when precision + recall is 0.
pub fn f1(yhat: &[u8], y: &[u8]) -> f64 {
    assert!(!y.is_empty());
    let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
    for (&a, &b) in yhat.iter().zip(y) {
        match (a, b) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fnn += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fnn;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Threshold probabilities at 0.5 into hard predictions.
pub fn threshold(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= 0.5)).collect()
}
