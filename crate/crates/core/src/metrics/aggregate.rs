use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::assess::AssessmentStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMethod {
    Mean,
    Median,
    Mode,
}

impl AggregateMethod {
    pub const ALL: [AggregateMethod; 3] = [AggregateMethod::Mean, AggregateMethod::Median, AggregateMethod::Mode];

    pub fn name(self) -> &'static str {
        match self {
            AggregateMethod::Mean => "mean",
            AggregateMethod::Median => "median",
            AggregateMethod::Mode => "mode",
        }
    }

    /// Aggregates one non-empty list.
    pub fn apply(self, values: &[f64]) -> f64 {
        debug_assert!(!values.is_empty());
        match self {
            AggregateMethod::Mean => values.iter().sum::<f64>() / values.len() as f64,
            AggregateMethod::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let m = v.len() / 2;
                if v.len() % 2 == 1 {
                    v[m]
                } else {
                    (v[m - 1] + v[m]) / 2.0
                }
            }
            AggregateMethod::Mode => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let (mut best, mut best_count) = (v[0], 0);
                let mut i = 0;
                while i < v.len() {
                    let j = v[i..].iter().take_while(|&&x| x == v[i]).count();
                    // Ascending scan with a strict comparison keeps the smallest on ties.
                    if j > best_count {
                        best = v[i];
                        best_count = j;
                    }
                    i += j;
                }
                best
            }
        }
    }
}

impl fmt::Display for AggregateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregateMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown aggregation method {s}"))
    }
}

pub fn aggregate(
    per_case_scores: &BTreeMap<String, Vec<f64>>,
    method: AggregateMethod,
) -> Result<BTreeMap<String, f64>, MetricsError> {
    per_case_scores
        .iter()
        .map(|(case, scores)| {
            if scores.is_empty() {
                Err(MetricsError::EmptyScores(case.clone()))
            } else {
                Ok((case.clone(), method.apply(scores)))
            }
        })
        .collect()
}

/// Per-case scores of the given judges (ok entries only), aggregated. Cases
/// where none of the judges has an ok assessment are an error.
pub fn aggregate_store(
    store: &AssessmentStore,
    judge_ids: &[String],
    case_ids: &[String],
    method: AggregateMethod,
) -> Result<BTreeMap<String, f64>, MetricsError> {
    let per_case: BTreeMap<String, Vec<f64>> = case_ids
        .iter()
        .map(|c| {
            let scores = judge_ids
                .iter()
                .filter_map(|j| store.assessment(c, j).map(|a| a.risk_score as f64))
                .collect();
            (c.clone(), scores)
        })
        .collect();
    aggregate(&per_case, method)
}
