use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{mock, AssessError, JudgeConfig, MockParams, RiskAssessment};
use crate::corpus::ClinicalCase;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("http: {0}")]
    Http(String),
    #[error("unexpected response shape: {0}")]
    Shape(String),
    #[error("backend cannot serve this request: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// What the request is asking for. Remote backends only read the messages;
/// mocks answer from this structured view.
#[derive(Debug, Clone, Copy)]
pub enum Task<'a> {
    Assess {
        case: &'a ClinicalCase,
    },
    Revise {
        case: &'a ClinicalCase,
        own: &'a RiskAssessment,
        peers: &'a [RiskAssessment],
    },
    Cluster {
        case: &'a ClinicalCase,
        assessments: &'a [RiskAssessment],
    },
}

#[derive(Debug, Clone)]
pub struct JudgeRequest<'a> {
    pub judge: &'a JudgeConfig,
    /// Identity the response is produced under: the judge id, or an agent id
    /// for multi-agent discussion.
    pub identity: &'a str,
    /// Repetition index for reliability runs.
    pub run: u32,
    pub messages: Vec<ChatMessage>,
    pub task: Task<'a>,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, TransportError>;

    /// Remote backends back off between retries; local ones do not.
    fn is_remote(&self) -> bool {
        true
    }
}

/// Chat-completions style endpoint: POST `{model, temperature, messages}`,
/// answer read from `choices[0].message.content`.
pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: url.into(),
            api_key,
            agent,
        }
    }

    /// Resolves the API key from the environment variable named in the config.
    pub fn from_config(config: &JudgeConfig) -> Result<Self, AssessError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| AssessError::MissingApiKey(var.clone()))?),
            None => None,
        };
        Ok(Self::new(config.endpoint.clone(), api_key, Duration::from_secs(180)))
    }

    pub fn request_body(judge: &JudgeConfig, messages: &[ChatMessage]) -> Value {
        json!({
            "model": judge.model_name,
            "temperature": judge.temperature,
            "messages": messages,
        })
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, TransportError> {
        let body = Self::request_body(request.judge, &request.messages);
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| TransportError::Http(e.to_string()))?;
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Shape(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Shape("missing choices[0].message.content".into()))
    }
}

/// Deterministic local judge.
pub struct MockBackend {
    params: MockParams,
}

impl MockBackend {
    pub fn new(params: MockParams) -> Self {
        Self { params }
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &JudgeRequest<'_>) -> Result<String, TransportError> {
        let temperature = request.judge.temperature;
        Ok(match request.task {
            Task::Assess { case } => {
                mock::respond(&self.params, case, request.identity, temperature, request.run)
            }
            Task::Revise { case, own, peers } => mock_revise(&self.params, case, own, peers),
            Task::Cluster { assessments, .. } => mock::mock_cluster_respond(assessments),
        })
    }

    fn is_remote(&self) -> bool {
        false
    }
}

fn mock_revise(params: &MockParams, case: &ClinicalCase, own: &RiskAssessment, peers: &[RiskAssessment]) -> String {
    if params.fail_cases.iter().any(|c| c == &case.case_id) {
        return "mock failure".into();
    }
    mock::mock_revise_respond(params, own, peers)
}
