use serde_json::Value;
use thiserror::Error;

use super::{Feature, RiskAssessment, FEATURE_COUNT, WEIGHT_SUM_WINDOW};

/// Why a judge response was rejected. Every variant is a retryable signal.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJson,
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("missing or mistyped field {0}")]
    MissingField(&'static str),
    #[error("risk_score is not an integer: {0}")]
    ScoreNotInteger(String),
    #[error("risk_score {0} outside [0, 100]")]
    ScoreOutOfRange(i128),
    #[error("expected {FEATURE_COUNT} features, found {0}")]
    FeatureCount(usize),
    #[error("feature {index}: {message}")]
    InvalidFeature { index: usize, message: String },
    #[error("feature weights sum to {0}, outside the accepted window around 1")]
    WeightSum(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorClass {
    /// The response is not a JSON object of the expected shape.
    Structure,
    /// The response is well-formed but violates the assessment schema.
    Schema,
}

impl ParseError {
    pub fn class(&self) -> ParseErrorClass {
        match self {
            ParseError::NoJson | ParseError::Malformed(_) | ParseError::MissingField(_) => {
                ParseErrorClass::Structure
            }
            _ => ParseErrorClass::Schema,
        }
    }
}

/// Pulls the outermost `{ ... }` span out of a response, tolerating code
/// fences and prose around it.
pub fn extract_json(raw: &str) -> Result<Value, ParseError> {
    let start = raw.find('{').ok_or(ParseError::NoJson)?;
    let end = raw.rfind('}').ok_or(ParseError::NoJson)?;
    if end < start {
        return Err(ParseError::NoJson);
    }
    let value: Value =
        serde_json::from_str(&raw[start..=end]).map_err(|e| ParseError::Malformed(e.to_string()))?;
    if !value.is_object() {
        return Err(ParseError::Malformed("top-level value is not an object".into()));
    }
    Ok(value)
}

fn parse_score(obj: &Value) -> Result<u8, ParseError> {
    let v = obj.get("risk_score").ok_or(ParseError::MissingField("risk_score"))?;
    let n = match v {
        Value::Number(n) => n,
        other => return Err(ParseError::ScoreNotInteger(other.to_string())),
    };
    let int = if let Some(i) = n.as_i64() {
        i as i128
    } else if let Some(u) = n.as_u64() {
        u as i128
    } else {
        return Err(ParseError::ScoreNotInteger(n.to_string()));
    };
    if !(0..=100).contains(&int) {
        return Err(ParseError::ScoreOutOfRange(int));
    }
    Ok(int as u8)
}

fn string_field(obj: &Value, key: &'static str) -> Result<String, ParseError> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or(ParseError::MissingField(key))
}

/// Parses and validates a chain-of-thought response.
///
/// Weights whose sum lies within 0.05 of 1 are divided by that sum; features
/// are then stably sorted by descending weight so the most influential one
/// comes first.
pub fn parse_assessment(raw: &str, judge_id: &str, case_id: &str) -> Result<RiskAssessment, ParseError> {
    let obj = extract_json(raw)?;
    let risk_score = parse_score(&obj)?;
    let list = obj
        .get("features")
        .and_then(Value::as_array)
        .ok_or(ParseError::MissingField("features"))?;
    if list.len() != FEATURE_COUNT {
        return Err(ParseError::FeatureCount(list.len()));
    }
    let mut features = Vec::with_capacity(FEATURE_COUNT);
    for (index, item) in list.iter().enumerate() {
        let invalid = |message: &str| ParseError::InvalidFeature {
            index,
            message: message.to_string(),
        };
        let name = item
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| invalid("name missing or not a string"))?;
        if name.trim().is_empty() {
            return Err(invalid("name is empty"));
        }
        let weight = item
            .get("weight")
            .and_then(Value::as_f64)
            .ok_or_else(|| invalid("weight missing or not a number"))?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(invalid("weight must be finite and non-negative"));
        }
        features.push(Feature {
            name: name.trim().to_string(),
            weight,
        });
    }
    let sum: f64 = features.iter().map(|f| f.weight).sum();
    if !((sum - 1.0).abs() <= WEIGHT_SUM_WINDOW) {
        return Err(ParseError::WeightSum(sum));
    }
    for f in &mut features {
        f.weight /= sum;
    }
    features.sort_by(|a, b| b.weight.total_cmp(&a.weight));

    let assessment = RiskAssessment {
        judge_id: judge_id.to_string(),
        case_id: case_id.to_string(),
        risk_score,
        features,
        feature_rationale: string_field(&obj, "feature_rationale")?,
        explanation: string_field(&obj, "explanation")?,
    };
    debug_assert!(assessment.validate().is_ok());
    Ok(assessment)
}

/// Parses a score-only response produced by the direct template.
pub fn parse_direct_score(raw: &str) -> Result<u8, ParseError> {
    parse_score(&extract_json(raw)?)
}
