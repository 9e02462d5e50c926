use serde::{Deserialize, Serialize};

use super::{fit_spec, AlignError, CandidateSpec, FeatureMatrix};
use crate::corpus::Label;
use crate::exec::Execution;
use crate::fingerprint::stable_u64;
use crate::metrics::roc_auc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub spec: CandidateSpec,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
    pub seed: u64,
}

/// Fold index for every row. Within each label stratum rows are ordered by
/// `(stable_u64(seed, ["fold", case_id]), case_id)` and dealt round-robin, so
/// assignment depends on case ids only, never on row position.
pub fn assign_folds(matrix: &FeatureMatrix, k: usize, seed: u64) -> Result<Vec<usize>, AlignError> {
    if k < 2 {
        return Err(AlignError::BadK(k));
    }
    let mut folds = vec![0usize; matrix.len()];
    for label in [Label::NonRare, Label::Rare] {
        let mut members: Vec<(u64, &str, usize)> = matrix
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.y == label)
            .map(|(i, r)| (stable_u64(seed, &["fold", &r.case_id]), r.case_id.as_str(), i))
            .collect();
        if members.len() < k {
            return Err(AlignError::ClassTooSmall {
                class: label.to_string(),
                count: members.len(),
                k,
            });
        }
        members.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (rank, &(_, _, i)) in members.iter().enumerate() {
            folds[i] = rank % k;
        }
    }
    Ok(folds)
}

/// Train/test matrices for fold `f`, each sorted by case id.
pub(crate) fn fold_split(matrix: &FeatureMatrix, folds: &[usize], f: usize) -> (FeatureMatrix, FeatureMatrix) {
    let (test, train): (Vec<usize>, Vec<usize>) = (0..matrix.len()).partition(|&i| folds[i] == f);
    (matrix.select_sorted(&train), matrix.select_sorted(&test))
}

pub(crate) fn holdout_auc(spec: &CandidateSpec, train: &FeatureMatrix, test: &FeatureMatrix) -> Result<f64, AlignError> {
    let model = fit_spec(spec, train)?;
    let scores = model.predict_matrix(test)?;
    roc_auc(&scores, &test.labels()).map_err(|e| AlignError::Precondition(e.to_string()))
}

/// Stratified k-fold cross-validation of `spec` on `matrix`.
pub fn cross_validate(spec: &CandidateSpec, matrix: &FeatureMatrix, k: usize, seed: u64) -> Result<CvResult, AlignError> {
    cross_validate_with(Execution::default(), spec, matrix, k, seed)
}

pub fn cross_validate_with(
    exec: Execution,
    spec: &CandidateSpec,
    matrix: &FeatureMatrix,
    k: usize,
    seed: u64,
) -> Result<CvResult, AlignError> {
    let matrix = matrix.project(&spec.judge_subset)?;
    let folds = assign_folds(&matrix, k, seed)?;
    let fold_aucs = exec
        .map_indexed(k, |f| {
            let (train, test) = fold_split(&matrix, &folds, f);
            holdout_auc(spec, &train, &test)
        })
        .into_iter()
        .collect::<Result<Vec<f64>, _>>()?;
    let mean_auc = fold_aucs.iter().sum::<f64>() / k as f64;
    Ok(CvResult {
        spec: spec.clone(),
        fold_aucs,
        mean_auc,
        seed,
    })
}
