//! Alignment of judge scores into one calibrated probability: feature
//! assembly, the two learners (L2 logistic regression and gradient-boosted
//! trees), stratified cross-validation and the three-stage
//! screen / optimize / finalize selection procedure.

mod cv;
mod gbdt;
mod logistic;
mod matrix;
mod model;
mod stages;

pub use cv::{assign_folds, cross_validate, cross_validate_with, CvResult};
pub use gbdt::{fit_gbdt, GbdtConfig, GbdtParams, Tree, TreeNode};
pub use logistic::{fit_logistic, LogisticConfig, LogisticParams};
pub(crate) use logistic::sigmoid;
pub use matrix::{assemble_features, FeatureMatrix, FeatureRow};
pub use model::{fit_spec, AlignmentModel, ModelParams};
pub use stages::{
    nested_prefix_subsets, stage1_screen, stage2_optimize, stage3_finalize, HyperGrid, Stage2Report, Stage2Result,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("judge subset is empty")]
    EmptySubset,
    #[error("unknown judge {0}")]
    UnknownJudge(String),
    #[error("no complete cases for the selected judges")]
    NoCompleteCases,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("class {class} has {count} rows, fewer than k = {k} folds")]
    ClassTooSmall { class: String, count: usize, k: usize },
    #[error("hyperparameters do not match algorithm {0:?}")]
    HyperparamMismatch(Algorithm),
    #[error("{0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Logistic,
    Gbdt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Hyperparams {
    Logistic(LogisticConfig),
    Gbdt(GbdtConfig),
}

impl Hyperparams {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Logistic => Hyperparams::Logistic(LogisticConfig::default()),
            Algorithm::Gbdt => Hyperparams::Gbdt(GbdtConfig::default()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyperparams::Logistic(_) => Algorithm::Logistic,
            Hyperparams::Gbdt(_) => Algorithm::Gbdt,
        }
    }
}

/// A judge subset paired with a learner and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub judge_subset: Vec<String>,
    pub hyperparams: Hyperparams,
}

impl CandidateSpec {
    pub fn new(judge_subset: Vec<String>, hyperparams: Hyperparams) -> Result<Self, AlignError> {
        if judge_subset.is_empty() {
            return Err(AlignError::EmptySubset);
        }
        Ok(Self {
            judge_subset,
            hyperparams,
        })
    }

    pub fn with_defaults(judge_subset: Vec<String>, algorithm: Algorithm) -> Result<Self, AlignError> {
        Self::new(judge_subset, Hyperparams::default_for(algorithm))
    }

    pub fn algorithm(&self) -> Algorithm {
        self.hyperparams.algorithm()
    }

    /// Ranking tie-break: smaller subset first, then lexicographic judge ids,
    /// then algorithm.
    pub(crate) fn simplicity_key(&self) -> (usize, &[String], Algorithm) {
        (self.judge_subset.len(), &self.judge_subset, self.algorithm())
    }
}
