//! Evaluation statistics: ROC analysis and the confusion battery, aggregation
//! baselines, score variability, reasoning diversity and Fleiss' kappa.

mod aggregate;
mod diversity;
mod reliability;
mod roc;
mod variability;

pub use aggregate::{aggregate, aggregate_store, AggregateMethod};
pub use diversity::{cluster_reasoning, diversity_metrics, validate_partition, Chain, ChainAssignment, ChainStats, DiversityReport};
pub use reliability::{bin_scores, fleiss_kappa, ReliabilityReport};
pub use roc::{confusion_metrics, evaluate, roc_auc, youden_threshold, EvalReport, YoudenPoint};
pub use variability::{score_variability, VariabilityReport};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("length mismatch: {0} scores, {1} labels")]
    LengthMismatch(usize, usize),
    #[error("non-finite score")]
    NonFinite,
    #[error("case {0} has no scores")]
    EmptyScores(String),
    #[error("{0}")]
    Precondition(String),
}

/// Non-finite floats in JSON: NaN is written as `null`, infinities as the
/// strings `"inf"` and `"-inf"`.
pub(crate) mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
        Null(()),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None | Some(Repr::Null(())) => Ok(f64::NAN),
            Some(Repr::Num(v)) => Ok(v),
            Some(Repr::Str(s)) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("unexpected float {other}"))),
            },
        }
    }
}
