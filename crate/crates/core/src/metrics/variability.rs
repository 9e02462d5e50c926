use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::assess::AssessmentStore;
use crate::corpus::Label;

/// Pairwise agreement and spread of judge scores, plus per-label histograms.
/// Matrix cells are `None` when the two judges share no ok case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityReport {
    pub judge_ids: Vec<String>,
    pub agreement_matrix: Vec<Vec<Option<f64>>>,
    pub mad_matrix: Vec<Vec<Option<f64>>>,
    /// Label -> number of distinct scores on a case -> fraction of cases.
    pub unique_count_histogram: BTreeMap<Label, BTreeMap<usize, f64>>,
    /// Label -> lower edge of a 5-point bin -> fraction of individual scores.
    /// Bins are [0,5), [5,10), ..., [95,100].
    pub score_range_histogram: BTreeMap<Label, BTreeMap<u8, f64>>,
}

pub(crate) fn score_bin(score: u8) -> u8 {
    (score.min(99) / 5) * 5
}

fn normalize<K: Ord + Clone>(counts: &BTreeMap<K, usize>) -> BTreeMap<K, f64> {
    let total: usize = counts.values().sum();
    counts.iter().map(|(k, &c)| (k.clone(), c as f64 / total as f64)).collect()
}

/// Statistics over the cases in `labels`, for the judges in `judge_ids`.
pub fn score_variability(
    store: &AssessmentStore,
    judge_ids: &[String],
    labels: &BTreeMap<String, Label>,
) -> Result<VariabilityReport, MetricsError> {
    let d = judge_ids.len();
    let scores: Vec<Vec<Option<u8>>> = labels
        .keys()
        .map(|c| judge_ids.iter().map(|j| store.assessment(c, j).map(|a| a.risk_score)).collect())
        .collect();
    let mut agreement = vec![vec![None; d]; d];
    let mut mad = vec![vec![None; d]; d];
    let mut any_pair = false;
    for a in 0..d {
        for b in a..d {
            let (mut n, mut same, mut abs) = (0usize, 0usize, 0u64);
            for row in &scores {
                if let (Some(x), Some(y)) = (row[a], row[b]) {
                    n += 1;
                    same += usize::from(x == y);
                    abs += u64::from(x.abs_diff(y));
                }
            }
            if n > 0 {
                let (ag, md) = (same as f64 / n as f64, abs as f64 / n as f64);
                agreement[a][b] = Some(ag);
                agreement[b][a] = Some(ag);
                mad[a][b] = Some(md);
                mad[b][a] = Some(md);
                any_pair |= a != b;
            }
        }
    }
    if !any_pair {
        return Err(MetricsError::Precondition(
            "need two judges with ok assessments on at least one shared case".into(),
        ));
    }
    let mut unique: BTreeMap<Label, BTreeMap<usize, usize>> = BTreeMap::new();
    let mut bins: BTreeMap<Label, BTreeMap<u8, usize>> = BTreeMap::new();
    for (row, label) in scores.iter().zip(labels.values()) {
        let present: Vec<u8> = row.iter().flatten().copied().collect();
        if present.is_empty() {
            continue;
        }
        let distinct: BTreeSet<u8> = present.iter().copied().collect();
        *unique.entry(*label).or_default().entry(distinct.len()).or_default() += 1;
        for s in present {
            *bins.entry(*label).or_default().entry(score_bin(s)).or_default() += 1;
        }
    }
    Ok(VariabilityReport {
        judge_ids: judge_ids.to_vec(),
        agreement_matrix: agreement,
        mad_matrix: mad,
        unique_count_histogram: unique.iter().map(|(l, c)| (*l, normalize(c))).collect(),
        score_range_histogram: bins.iter().map(|(l, c)| (*l, normalize(c))).collect(),
    })
}
