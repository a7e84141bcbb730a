//! Confusion-matrix metrics, rank AUROC and Cohen's kappa.

use serde::{Deserialize, Serialize};

use crate::error::{GlpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// `None` when the labels hold a single class.
    pub auroc: Option<f64>,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
}

pub const METRIC_NAMES: [&str; 6] = ["auroc", "accuracy", "sensitivity", "specificity", "precision", "f1"];

impl MetricsRow {
    /// Values in [`METRIC_NAMES`] order; a missing AUROC is NaN.
    pub fn values(&self) -> [f64; 6] {
        [
            self.auroc.unwrap_or(f64::NAN),
            self.accuracy,
            self.sensitivity,
            self.specificity,
            self.precision,
            self.f1,
        ]
    }

    /// Element-wise mean. AUROC is present only if present in every row.
    pub fn mean(rows: &[MetricsRow]) -> MetricsRow {
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let auroc: Option<Vec<f64>> = rows.iter().map(|r| r.auroc).collect();
        MetricsRow {
            auroc: auroc.map(|a| a.iter().sum::<f64>() / n),
            accuracy: avg(|r| r.accuracy),
            sensitivity: avg(|r| r.sensitivity),
            specificity: avg(|r| r.specificity),
            precision: avg(|r| r.precision),
            f1: avg(|r| r.f1),
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

/// Standard confusion-matrix metrics; any 0/0 ratio is reported as 0.
pub fn classification_metrics(labels: &[bool], predictions: &[bool], scores: &[f64]) -> Result<MetricsRow> {
    if labels.is_empty() {
        return Err(GlpError::Precondition("metrics of an empty sample".into()));
    }
    if predictions.len() != labels.len() || scores.len() != labels.len() {
        return Err(GlpError::Shape { expected: labels.len(), got: predictions.len().min(scores.len()) });
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y, p) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fn_);
    let f1 = if precision + sensitivity > 0.0 { 2.0 * precision * sensitivity / (precision + sensitivity) } else { 0.0 };
    Ok(MetricsRow {
        auroc: auroc(labels, scores).ok(),
        accuracy: ratio(tp + tn, labels.len()),
        sensitivity,
        specificity: ratio(tn, tn + fp),
        precision,
        f1,
    })
}

/// Mann–Whitney AUROC with average ranks, so ties count half.
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(GlpError::Shape { expected: labels.len(), got: scores.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(GlpError::Undefined("AUROC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GlpError::Numeric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps tied midranks integral.
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank2 = (i + 1 + j + 1) as u64;
        rank2_pos += midrank2 * order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        i = j + 1;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    // U * 2 = rank2_pos - p (p + 1).
    let u2 = rank2_pos - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

/// `(p_o - p_e) / (1 - p_e)` for two binary raters.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GlpError::Shape { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(GlpError::Precondition("kappa needs at least 2 ratings".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&v| v).count() as f64 / n;
    let pb = b.iter().filter(|&&v| v).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if p_e == 1.0 {
        return if p_o == 1.0 { Ok(1.0) } else { Err(GlpError::Undefined("kappa with p_e = 1".into())) };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Mean kappa over all unordered pairs of raters.
pub fn mean_pairwise_kappa(ratings: &[Vec<bool>]) -> Result<f64> {
    if ratings.len() < 2 {
        return Err(GlpError::Precondition("pairwise kappa needs at least 2 raters".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..ratings.len() {
        for j in i + 1..ratings.len() {
            total += cohens_kappa(&ratings[i], &ratings[j])?;
            pairs += 1;
        }
    }
    Ok(total / f64::from(pairs))
}
