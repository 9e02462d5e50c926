use serde::{Deserialize, Serialize};

use super::{nonfinite, MetricsError};
use crate::corpus::Label;

fn check(scores: &[f64], labels: &[Label]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let p = labels.iter().filter(|l| l.is_rare()).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((p, n))
}

/// Mann-Whitney AUC via midranks; ties between classes count one half.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricsError> {
    let (p, n) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based midranks of the positives, doubled to stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        let pos = order[i..=j].iter().filter(|&&k| labels[k].is_rare()).count() as u64;
        twice_rank_sum += twice_mid * pos;
        i = j + 1;
    }
    let (p64, n64) = (p as u64, n as u64);
    let twice_u = twice_rank_sum - p64 * (p64 + 1);
    Ok(twice_u as f64 / (2 * p64 * n64) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenPoint {
    #[serde(with = "nonfinite")]
    pub threshold: f64,
    pub j: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// (fpr, tpr)
    pub roc_point: (f64, f64),
}

/// Threshold maximizing sensitivity + specificity under the rule
/// `score >= threshold` is positive. Candidates are -inf, the midpoints
/// between consecutive distinct scores, and +inf; ties go to the smallest.
pub fn youden_threshold(scores: &[f64], labels: &[Label]) -> Result<YoudenPoint, MetricsError> {
    let (p, n) = check(scores, labels)?;
    let mut pairs: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(&s, l)| (s, l.is_rare())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sweep upwards: at candidate t everything below t is called negative.
    let (mut tp, mut tn) = (p, 0usize);
    let objective = |tp: usize, tn: usize| (tp * n + tn * p) as i128;
    let mut best = (f64::NEG_INFINITY, tp, tn);
    let mut best_obj = objective(tp, tn);
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == v {
            if pairs[i].1 {
                tp -= 1;
            } else {
                tn += 1;
            }
            i += 1;
        }
        let t = if i < pairs.len() { 0.5 * (v + pairs[i].0) } else { f64::INFINITY };
        let obj = objective(tp, tn);
        if obj > best_obj {
            best_obj = obj;
            best = (t, tp, tn);
        }
    }
    let (threshold, tp, tn) = best;
    let sensitivity = tp as f64 / p as f64;
    let specificity = tn as f64 / n as f64;
    Ok(YoudenPoint {
        threshold,
        j: sensitivity + specificity - 1.0,
        sensitivity,
        specificity,
        roc_point: (1.0 - specificity, sensitivity),
    })
}

/// Full diagnostic battery at one threshold. PPV and NPV are NaN (written as
/// null) with a flag when nothing is called positive or negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    #[serde(with = "nonfinite")]
    pub threshold: f64,
    pub youden_j: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub fnr: f64,
    pub fpr: f64,
    #[serde(with = "nonfinite")]
    pub ppv: f64,
    #[serde(with = "nonfinite")]
    pub npv: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub f2: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ppv_undefined: bool,
    pub npv_undefined: bool,
}

fn f_beta(ppv: f64, sens: f64, beta2: f64) -> f64 {
    let denom = beta2 * ppv + sens;
    if ppv.is_nan() || denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * ppv * sens / denom
    }
}

pub fn confusion_metrics(scores: &[f64], labels: &[Label], threshold: f64) -> Result<EvalReport, MetricsError> {
    let (p, n) = check(scores, labels)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (s, l) in scores.iter().zip(labels) {
        if *s >= threshold {
            if l.is_rare() {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let fn_ = p - tp;
    let tn = n - fp;
    let sensitivity = tp as f64 / p as f64;
    let specificity = tn as f64 / n as f64;
    let ppv_undefined = tp + fp == 0;
    let npv_undefined = tn + fn_ == 0;
    let ppv = if ppv_undefined { f64::NAN } else { tp as f64 / (tp + fp) as f64 };
    let npv = if npv_undefined { f64::NAN } else { tn as f64 / (tn + fn_) as f64 };
    Ok(EvalReport {
        auc: roc_auc(scores, labels)?,
        threshold,
        youden_j: sensitivity + specificity - 1.0,
        sensitivity,
        specificity,
        fnr: 1.0 - sensitivity,
        fpr: 1.0 - specificity,
        ppv,
        npv,
        accuracy: (tp + tn) as f64 / (p + n) as f64,
        balanced_accuracy: (sensitivity + specificity) / 2.0,
        f1: f_beta(ppv, sensitivity, 1.0),
        f2: f_beta(ppv, sensitivity, 4.0),
        n_pos: p,
        n_neg: n,
        tp,
        fp,
        tn,
        fn_,
        ppv_undefined,
        npv_undefined,
    })
}

/// Battery at the Youden-optimal threshold of the same scores.
pub fn evaluate(scores: &[f64], labels: &[Label]) -> Result<EvalReport, MetricsError> {
    let y = youden_threshold(scores, labels)?;
    confusion_metrics(scores, labels, y.threshold)
}
