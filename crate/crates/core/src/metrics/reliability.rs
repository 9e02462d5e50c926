use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub kappa: f64,
    pub n_cases: usize,
    pub n_runs: usize,
    pub category_set: Vec<i64>,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    /// Every rating fell in one category, so chance agreement is 1 and kappa
    /// is reported as 1 by convention.
    pub degenerate: bool,
}

/// Collapses integer scores into bins of `width` (labelled by lower edge).
pub fn bin_scores(ratings: &[Vec<i64>], width: i64) -> Vec<Vec<i64>> {
    assert!(width > 0, "bin width must be positive");
    ratings
        .iter()
        .map(|row| row.iter().map(|&s| s.div_euclid(width) * width).collect())
        .collect()
}

/// Fleiss' kappa for a cases x runs rating matrix. Categories default to the
/// values observed; when given, every rating must belong to the set.
pub fn fleiss_kappa(ratings: &[Vec<i64>], categories: Option<&[i64]>) -> Result<ReliabilityReport, MetricsError> {
    let n_cases = ratings.len();
    if n_cases == 0 {
        return Err(MetricsError::Precondition("no cases to rate".into()));
    }
    let n = ratings[0].len();
    if n < 2 {
        return Err(MetricsError::Precondition("fleiss kappa needs at least 2 runs".into()));
    }
    if ratings.iter().any(|r| r.len() != n) {
        return Err(MetricsError::Precondition("every case needs the same number of runs".into()));
    }
    let mut totals: BTreeMap<i64, usize> = categories.unwrap_or(&[]).iter().map(|&c| (c, 0)).collect();
    let mut p_bar = 0.0;
    for row in ratings {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &v in row {
            if categories.is_some() && !totals.contains_key(&v) {
                return Err(MetricsError::Precondition(format!("rating {v} is not a known category")));
            }
            *counts.entry(v).or_default() += 1;
            *totals.entry(v).or_default() += 1;
        }
        let sq: usize = counts.values().map(|c| c * c).sum();
        p_bar += (sq - n) as f64 / (n * (n - 1)) as f64;
    }
    p_bar /= n_cases as f64;
    let grand = (n_cases * n) as f64;
    let p_e: f64 = totals.values().map(|&c| (c as f64 / grand).powi(2)).sum();
    let used = totals.values().filter(|&&c| c > 0).count();
    let degenerate = used == 1;
    let kappa = if degenerate { 1.0 } else { (p_bar - p_e) / (1.0 - p_e) };
    Ok(ReliabilityReport {
        kappa,
        n_cases,
        n_runs: n,
        category_set: totals.keys().copied().collect(),
        observed_agreement: p_bar,
        expected_agreement: p_e,
        degenerate,
    })
}
