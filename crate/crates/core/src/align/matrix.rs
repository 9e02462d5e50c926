use serde::{Deserialize, Serialize};

use super::AlignError;
use crate::assess::AssessmentStore;
use crate::corpus::{ClinicalCase, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub case_id: String,
    pub x: Vec<f64>,
    pub y: Label,
}

/// Cases x judges score matrix with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub judge_ids: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn new(judge_ids: Vec<String>, rows: Vec<FeatureRow>) -> Result<Self, AlignError> {
        let d = judge_ids.len();
        if d == 0 {
            return Err(AlignError::EmptySubset);
        }
        for r in &rows {
            if r.x.len() != d {
                return Err(AlignError::Dimension { expected: d, got: r.x.len() });
            }
        }
        Ok(Self { judge_ids, rows })
    }

    pub fn dim(&self) -> usize {
        self.judge_ids.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.y.is_rare()).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.x[j]).collect()
    }

    /// Keeps only the named judges' columns, in the given order.
    pub fn project(&self, subset: &[String]) -> Result<FeatureMatrix, AlignError> {
        if subset.is_empty() {
            return Err(AlignError::EmptySubset);
        }
        let idx: Vec<usize> = subset
            .iter()
            .map(|j| {
                self.judge_ids
                    .iter()
                    .position(|k| k == j)
                    .ok_or_else(|| AlignError::UnknownJudge(j.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(FeatureMatrix {
            judge_ids: subset.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow {
                    case_id: r.case_id.clone(),
                    x: idx.iter().map(|&i| r.x[i]).collect(),
                    y: r.y,
                })
                .collect(),
        })
    }

    /// Rows at the given indices, reordered by case id.
    pub fn select_sorted(&self, indices: &[usize]) -> FeatureMatrix {
        let mut rows: Vec<FeatureRow> = indices.iter().map(|&i| self.rows[i].clone()).collect();
        rows.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        FeatureMatrix {
            judge_ids: self.judge_ids.clone(),
            rows,
        }
    }

    pub fn require_both_classes(&self) -> Result<(), AlignError> {
        if self.positives() == 0 || self.negatives() == 0 {
            return Err(AlignError::SingleClass);
        }
        Ok(())
    }
}

/// Complete-case matrix: one row per case that has an ok assessment from every
/// judge in `judge_subset`, in case order.
pub fn assemble_features(
    store: &AssessmentStore,
    judge_subset: &[String],
    cases: &[ClinicalCase],
) -> Result<FeatureMatrix, AlignError> {
    if judge_subset.is_empty() {
        return Err(AlignError::EmptySubset);
    }
    let rows: Vec<FeatureRow> = cases
        .iter()
        .filter_map(|c| {
            let x: Option<Vec<f64>> = judge_subset
                .iter()
                .map(|j| store.assessment(&c.case_id, j).map(|a| a.risk_score as f64))
                .collect();
            x.map(|x| FeatureRow {
                case_id: c.case_id.clone(),
                x,
                y: c.label,
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(AlignError::NoCompleteCases);
    }
    FeatureMatrix::new(judge_subset.to_vec(), rows)
}
