//! Judge orchestration: prompt construction, structured-output parsing,
//! provider backends (chat-completions HTTP and deterministic mocks), the
//! assessment cache, bounded-concurrency corpus runs and the multi-agent
//! consensus baseline.

mod backend;
mod consensus;
mod mock;
mod parse;
mod prompt;
mod run;
mod store;

pub use backend::{Backend, ChatMessage, HttpBackend, JudgeRequest, MockBackend, Task, TransportError};
pub use consensus::{multi_agent_consensus, ConsensusOutcome};
pub use mock::{mock_cluster_respond, mock_judge_respond, mock_revise_respond};
pub use parse::{extract_json, parse_assessment, parse_direct_score, ParseError, ParseErrorClass};
pub use prompt::{build_cluster_prompt, build_prompt, build_revision_prompt, Template, SYSTEM_PROMPT};
pub use run::{assess_case, assess_corpus, AssessOptions, AssessStats, Judge};
pub use store::{AssessmentStore, StoreEntry, StoreError, StoreRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of weighted features every assessment must carry.
pub const FEATURE_COUNT: usize = 5;
/// Accepted drift of the raw weight sum before renormalization.
pub const WEIGHT_SUM_WINDOW: f64 = 0.05;
/// Tolerance on the weight sum of a stored (renormalized) assessment.
pub const WEIGHT_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("judge {judge_id}: {message}")]
    Config { judge_id: String, message: String },
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Store(#[from] StoreError),
}

/// Parameters of a deterministic stand-in judge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockParams {
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub noise_sd: f64,
    /// 0 gives an uninformative judge, 1 a judge whose base score follows the label.
    #[serde(default)]
    pub label_leak: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of the gap to the peers' mean closed on each discussion round.
    #[serde(default)]
    pub revision_rate: f64,
    /// Cases for which the mock returns an unparseable response.
    #[serde(default)]
    pub fail_cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub judge_id: String,
    /// Chat-completions URL, or `"mock"`.
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Base delay of the exponential backoff between attempts on remote backends.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default, alias = "mock_params")]
    pub mock: Option<MockParams>,
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

impl JudgeConfig {
    pub fn mock(judge_id: impl Into<String>, params: MockParams) -> Self {
        let judge_id = judge_id.into();
        Self {
            model_name: format!("mock-{judge_id}"),
            judge_id,
            endpoint: "mock".into(),
            temperature: 0.0,
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            api_key_env: None,
            mock: Some(params),
        }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock"
    }

    pub fn validate(&self) -> Result<(), AssessError> {
        let err = |message: &str| AssessError::Config {
            judge_id: self.judge_id.clone(),
            message: message.to_string(),
        };
        if self.judge_id.trim().is_empty() {
            return Err(err("judge_id is empty"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(err("temperature must be a finite non-negative number"));
        }
        if self.is_mock() {
            let Some(m) = &self.mock else {
                return Err(err("mock endpoint requires mock parameters"));
            };
            if !(0.0..=1.0).contains(&m.label_leak) {
                return Err(err("label_leak must lie in [0, 1]"));
            }
            if !(m.noise_sd >= 0.0) {
                return Err(err("noise_sd must be non-negative"));
            }
            if !(0.0..=1.0).contains(&m.revision_rate) {
                return Err(err("revision_rate must lie in [0, 1]"));
            }
        } else if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(err("endpoint must be an http(s) URL or \"mock\""));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub weight: f64,
}

/// One judge's validated structured output for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub judge_id: String,
    pub case_id: String,
    pub risk_score: u8,
    pub features: Vec<Feature>,
    pub feature_rationale: String,
    pub explanation: String,
}

impl RiskAssessment {
    /// Checks every stored-assessment invariant.
    pub fn validate(&self) -> Result<(), String> {
        if self.risk_score > 100 {
            return Err(format!("risk_score {} outside [0, 100]", self.risk_score));
        }
        if self.features.len() != FEATURE_COUNT {
            return Err(format!("expected {FEATURE_COUNT} features, found {}", self.features.len()));
        }
        if self
            .features
            .iter()
            .any(|f| !(f.weight.is_finite() && f.weight >= 0.0))
        {
            return Err("weights must be finite and non-negative".into());
        }
        let sum: f64 = self.features.iter().map(|f| f.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(format!("weights sum to {sum}, not 1"));
        }
        let first = self.features[0].weight;
        if self.features.iter().any(|f| f.weight > first) {
            return Err("highest-weight feature must be listed first".into());
        }
        Ok(())
    }

    pub fn top_feature(&self) -> &str {
        &self.features[0].name
    }
}
