use serde::{Deserialize, Serialize};

use super::{fit_gbdt, fit_logistic, AlignError, CandidateSpec, FeatureMatrix, GbdtParams, Hyperparams, LogisticParams};
use crate::fingerprint::Fingerprint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic(LogisticParams),
    Gbdt(GbdtParams),
}

/// A fitted learner plus the judge order it expects. Serialized as the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModel {
    pub spec: CandidateSpec,
    pub judge_ids: Vec<String>,
    pub params: ModelParams,
    pub training_fingerprint: String,
}

/// Hash of the spec, the training rows (in the order given) and the seed.
pub(crate) fn training_fingerprint(spec: &CandidateSpec, matrix: &FeatureMatrix) -> String {
    let seed = match &spec.hyperparams {
        Hyperparams::Logistic(c) => c.seed,
        Hyperparams::Gbdt(c) => c.seed,
    };
    let mut fp = Fingerprint::new()
        .str(&serde_json::to_string(spec).expect("spec serializes"))
        .u64(seed);
    for j in &matrix.judge_ids {
        fp = fp.str(j);
    }
    for r in &matrix.rows {
        fp = fp.str(&r.case_id).u64(r.y.as_u8() as u64);
        for v in &r.x {
            fp = fp.f64(*v);
        }
    }
    fp.hex()
}

/// Fits `spec` on `matrix`, which must hold exactly the spec's judge columns
/// (in order) or a superset that is projected first.
pub fn fit_spec(spec: &CandidateSpec, matrix: &FeatureMatrix) -> Result<AlignmentModel, AlignError> {
    let matrix = if matrix.judge_ids == spec.judge_subset {
        std::borrow::Cow::Borrowed(matrix)
    } else {
        std::borrow::Cow::Owned(matrix.project(&spec.judge_subset)?)
    };
    let params = match &spec.hyperparams {
        Hyperparams::Logistic(c) => ModelParams::Logistic(fit_logistic(&matrix, c)?),
        Hyperparams::Gbdt(c) => ModelParams::Gbdt(fit_gbdt(&matrix, c)?),
    };
    Ok(AlignmentModel {
        spec: spec.clone(),
        judge_ids: spec.judge_subset.clone(),
        params,
        training_fingerprint: training_fingerprint(spec, &matrix),
    })
}

impl AlignmentModel {
    pub fn dim(&self) -> usize {
        self.judge_ids.len()
    }

    /// Log-odds before the logistic link.
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Logistic(p) => p.raw_score(x),
            ModelParams::Gbdt(p) => p.raw_score(x),
        }
    }

    /// Probability in [0, 1]. `x` must have length `dim()`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Logistic(p) => p.predict(x),
            ModelParams::Gbdt(p) => p.predict(x),
        }
    }

    pub fn predict_checked(&self, x: &[f64]) -> Result<f64, AlignError> {
        if x.len() != self.dim() {
            return Err(AlignError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict(x))
    }

    /// `100 * predict(x)`.
    pub fn reference_score(&self, x: &[f64]) -> Result<f64, AlignError> {
        Ok(100.0 * self.predict_checked(x)?)
    }

    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, AlignError> {
        let projected;
        let m = if matrix.judge_ids == self.judge_ids {
            matrix
        } else {
            projected = matrix.project(&self.judge_ids)?;
            &projected
        };
        Ok(m.rows.iter().map(|r| self.predict(&r.x)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
